#pragma once

// REST front end of the rating service:
//   POST /sessions                     {items:[{id, first, second}], raters_per_item, session_id?, seed?}
//   GET  /sessions/{sid}/next?rater=R  -> {done:false, item_id, goal, sequences:[...]} or {done:true}
//   POST /sessions/{sid}/ratings       {item_id, rater, choices:{aspect: choice}}
//   GET  /sessions/{sid}/aggregate     ?majority=1 for per-item majority vote
//   GET  /instructions
//   GET  /images/...                   files under the plan output directory
//
// `first`/`second` are plan records inline, or paths of .plan files relative
// to the plan directory. Item payloads carry "Sequence 1"/"Sequence 2" only.

#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "planweave/rater.hpp"

namespace httplib {
class Server;
}

namespace planweave {

/// Rater-facing view of an item; image locators become URLs.
nlohmann::json item_view(const std::string& session_id, const ComparisonItem& item,
                         const std::function<std::string(const std::string& locator)>& image_url);

class RaterHttpServer {
 public:
  /// `ui_dir`, when non-empty, is served as static files at "/".
  RaterHttpServer(RaterService& service, std::string plans_dir, std::string ui_dir = "");
  ~RaterHttpServer();

  /// Binds to an ephemeral port on `host` and returns it (-1 on failure).
  int bind_any_port(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void serve();
  void stop();
  void wait_until_ready() const;

 private:
  void routes();
  std::string image_url(const std::string& locator);
  MultimodalPlan plan_ref(const nlohmann::json& ref) const;

  RaterService& service_;
  std::string plans_dir_;
  std::string ui_dir_;
  std::unique_ptr<httplib::Server> server_;
  std::mutex abs_mutex_;
  std::map<std::string, std::string> abs_images_;  // token -> absolute path
};

}  // namespace planweave
