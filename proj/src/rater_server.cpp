#include "planweave/rater_server.hpp"

#include <httplib.h>

#include <filesystem>

#include "planweave/digest.hpp"
#include "planweave/pipeline.hpp"

namespace planweave {

namespace fs = std::filesystem;
using nlohmann::json;

json item_view(const std::string& session_id, const ComparisonItem& item,
               const std::function<std::string(const std::string&)>& image_url) {
  json sequences = json::array();
  for (int k = 1; k <= 2; ++k) {
    json steps = json::array();
    for (const auto& s : item.sequence(k).steps) {
      steps.push_back(json{{"index", s.index},
                           {"text", s.text},
                           {"image_url", s.image ? json(image_url(s.image->locator)) : json(nullptr)}});
    }
    sequences.push_back(json{{"label", "Sequence " + std::to_string(k)}, {"steps", steps}});
  }
  return json{{"done", false},
              {"session_id", session_id},
              {"item_id", item.id},
              {"goal", {{"title", item.goal().title}}},
              {"sequences", sequences}};
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

int status_for(const RaterError& e) {
  switch (e.kind()) {
    case RaterError::Kind::not_found: return 404;
    case RaterError::Kind::invalid: return 400;
    case RaterError::Kind::conflict: return 409;
  }
  return 500;
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const RaterError& e) {
    json body{{"error", e.what()}};
    if (e.kind() == RaterError::Kind::conflict) body["status"] = "duplicate";
    reply(res, status_for(e), body);
  } catch (const json::exception& e) {
    reply(res, 400, json{{"error", std::string("bad request: ") + e.what()}});
  } catch (const Error& e) {
    reply(res, 400, json{{"error", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, json{{"error", e.what()}});
  }
}

std::string content_type_for(const fs::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  return "application/octet-stream";
}

}  // namespace

RaterHttpServer::RaterHttpServer(RaterService& service, std::string plans_dir, std::string ui_dir)
    : service_(service),
      plans_dir_(std::move(plans_dir)),
      ui_dir_(std::move(ui_dir)),
      server_(std::make_unique<httplib::Server>()) {
  routes();
}

RaterHttpServer::~RaterHttpServer() { stop(); }

std::string RaterHttpServer::image_url(const std::string& locator) {
  if (!fs::path(locator).is_absolute()) return "/images/" + locator;
  const std::string token = sha256_hex(locator).substr(0, 32) + fs::path(locator).extension().string();
  std::lock_guard lock(abs_mutex_);
  abs_images_[token] = locator;
  return "/images/abs/" + token;
}

MultimodalPlan RaterHttpServer::plan_ref(const json& ref) const {
  if (ref.is_object()) return plan_from_json(ref);
  if (!ref.is_string()) throw RaterError(RaterError::Kind::invalid, "plan must be an object or a .plan path");
  const fs::path rel(ref.get<std::string>());
  if (rel.is_absolute() || rel.lexically_normal().string().rfind("..", 0) == 0) {
    throw RaterError(RaterError::Kind::invalid, "plan path must stay inside the plan directory");
  }
  const fs::path full = fs::path(plans_dir_) / rel;
  if (!fs::is_regular_file(full)) throw RaterError(RaterError::Kind::not_found, "plan not found: '" + rel.string() + "'");
  return read_plan_record(full.string());
}

void RaterHttpServer::routes() {
  auto& s = *server_;

  s.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      if (!body.contains("items") || !body["items"].is_array()) {
        throw RaterError(RaterError::Kind::invalid, "missing field 'items'");
      }
      std::vector<ComparisonItem> items;
      for (const auto& it : body["items"]) {
        items.push_back(ComparisonItem{it.at("id").get<std::string>(), plan_ref(it.at("first")),
                                       plan_ref(it.at("second")), false});
      }
      const int raters = body.value("raters_per_item", 3);
      std::optional<std::string> sid;
      if (body.contains("session_id")) sid = body["session_id"].get<std::string>();
      std::optional<std::uint64_t> seed;
      if (body.contains("seed")) seed = body["seed"].get<std::uint64_t>();
      const std::string id = service_.create_session(std::move(items), raters, sid, seed);
      const SessionStatus st = service_.status(id);
      reply(res, 201, json{{"session_id", id}, {"quota", st.quota}, {"items", st.items}});
    });
  });

  s.Get(R"(/sessions/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string sid = req.matches[1];
      const std::string rater = req.get_param_value("rater");
      if (rater.empty()) throw RaterError(RaterError::Kind::invalid, "missing query parameter 'rater'");
      auto item = service_.next_assignment(sid, rater);
      if (!item) {
        reply(res, 200, json{{"done", true}, {"session_id", sid}});
        return;
      }
      reply(res, 200, item_view(sid, *item, [this](const std::string& l) { return image_url(l); }));
    });
  });

  s.Post(R"(/sessions/([^/]+)/ratings)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string sid = req.matches[1];
      Rating r = rating_from_json(json::parse(req.body));
      service_.submit_rating(sid, std::move(r));
      reply(res, 201, json{{"status", "accepted"}});
    });
  });

  s.Get(R"(/sessions/([^/]+)/aggregate)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string sid = req.matches[1];
      const bool majority = req.get_param_value("majority") == "1" || req.get_param_value("majority") == "true";
      json body = aggregate_to_json(service_.aggregate(sid, majority));
      const SessionStatus st = service_.status(sid);
      body["quota"] = st.quota;
      reply(res, 200, body);
    });
  });

  s.Get("/instructions", [](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, rater_instructions());
  });

  s.Get(R"(/images/abs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    std::string path;
    {
      std::lock_guard lock(abs_mutex_);
      auto it = abs_images_.find(req.matches[1]);
      if (it != abs_images_.end()) path = it->second;
    }
    if (path.empty() || !fs::is_regular_file(path)) {
      reply(res, 404, json{{"error", "image not found"}});
      return;
    }
    const auto bytes = read_file_bytes(path);
    res.set_content(std::string(bytes.begin(), bytes.end()), content_type_for(path));
  });

  s.Get(R"(/images/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
    const fs::path rel = fs::path(std::string(req.matches[1])).lexically_normal();
    if (rel.is_absolute() || rel.string().rfind("..", 0) == 0) {
      reply(res, 400, json{{"error", "bad image path"}});
      return;
    }
    const fs::path full = fs::path(plans_dir_) / rel;
    if (!fs::is_regular_file(full)) {
      reply(res, 404, json{{"error", "image not found"}});
      return;
    }
    const auto bytes = read_file_bytes(full.string());
    res.set_content(std::string(bytes.begin(), bytes.end()), content_type_for(full));
  });

  if (!ui_dir_.empty()) s.set_mount_point("/", ui_dir_);
}

int RaterHttpServer::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool RaterHttpServer::bind(const std::string& host, int port) { return server_->bind_to_port(host, port); }

void RaterHttpServer::serve() { server_->listen_after_bind(); }

void RaterHttpServer::stop() {
  if (server_) server_->stop();
}

void RaterHttpServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace planweave
