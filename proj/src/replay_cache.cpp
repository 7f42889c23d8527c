#include "planweave/replay_cache.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "planweave/digest.hpp"
#include "planweave/errors.hpp"

namespace planweave {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(CacheMode m) {
  switch (m) {
    case CacheMode::off: return "off";
    case CacheMode::record: return "record";
    case CacheMode::replay: return "replay";
    case CacheMode::strict_replay: return "strict-replay";
  }
  return "off";
}

CacheMode cache_mode_from_string(std::string_view tag) {
  if (tag == "off") return CacheMode::off;
  if (tag == "record") return CacheMode::record;
  if (tag == "replay") return CacheMode::replay;
  if (tag == "strict-replay") return CacheMode::strict_replay;
  throw ConfigError("unknown cache mode '" + std::string(tag) +
                    "' (expected off, record, replay or strict-replay)");
}

CacheMode cache_mode_from_env(CacheMode fallback) {
  const char* v = std::getenv("PLANWEAVE_CACHE_MODE");
  if (!v || !*v) return fallback;
  return cache_mode_from_string(v);
}

std::string canonicalize(const json& request) { return request.dump(); }

CacheKey make_cache_key(const std::string& backend_id, const json& request) {
  return {backend_id, sha256_hex(canonicalize(request))};
}

ReplayCache::ReplayCache(std::string dir, CacheMode mode) : dir_(std::move(dir)), mode_(mode) {
  if (mode_ != CacheMode::off) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec && !fs::is_directory(dir_)) throw ConfigError("cache dir not writable: " + dir_);
  }
}

std::string ReplayCache::path_for(const CacheKey& key) const {
  std::string safe;
  for (char c : key.backend_id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    safe += ok ? c : '_';
  }
  return (fs::path(dir_) / safe / (key.request_digest + ".record")).string();
}

std::mutex& ReplayCache::lock_for(const CacheKey& key) {
  return stripes_[std::hash<std::string>{}(key.backend_id + key.request_digest) % stripes_.size()];
}

std::optional<json> ReplayCache::read(const CacheKey& key, const json& request) const {
  const std::string path = path_for(key);
  if (!fs::exists(path)) return std::nullopt;
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  json rec;
  try {
    rec = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw CacheIntegrityError("corrupt cache record " + path + ": " + e.what());
  }
  if (!rec.is_object() || !rec.contains("response") || !rec.contains("checksum") ||
      !rec.contains("request")) {
    throw CacheIntegrityError("corrupt cache record " + path + ": missing fields");
  }
  if (rec["checksum"] != sha256_hex(canonicalize(rec["response"]))) {
    throw CacheIntegrityError("cache record " + path + " failed its checksum");
  }
  if (canonicalize(rec["request"]) != canonicalize(request)) {
    throw CacheIntegrityError("cache record " + path + " does not match its request");
  }
  return rec["response"];
}

void ReplayCache::write(const CacheKey& key, const json& request, const json& response) {
  json rec{{"backend_id", key.backend_id},
           {"request", request},
           {"response", response},
           {"checksum", sha256_hex(canonicalize(response))}};
  write_file_atomic(path_for(key), rec.dump(1) + "\n");
}

json ReplayCache::through(const std::string& backend_id, const json& request,
                          const std::function<json()>& fetch) {
  if (mode_ == CacheMode::off) return fetch();
  const CacheKey key = make_cache_key(backend_id, request);
  std::lock_guard lock(lock_for(key));
  if (mode_ != CacheMode::record) {
    if (auto hit = read(key, request)) {
      ++hits_;
      return *hit;
    }
    if (mode_ == CacheMode::strict_replay) {
      throw CacheMiss("cache miss: " + backend_id + "/" + key.request_digest);
    }
  }
  ++misses_;
  json response = fetch();
  write(key, request, response);
  return response;
}

namespace {

json params_json(const GenerationParams& p) {
  return json{{"temperature", p.temperature},
              {"max_tokens", p.max_tokens},
              {"seed", p.seed ? json(*p.seed) : json(nullptr)}};
}

json vector_json(const EmbeddingVector& v) {
  return json{{"values", v.values}, {"space", std::string(to_string(v.space))}};
}

EmbeddingVector vector_from_json(const json& j) {
  return {j.at("values").get<std::vector<double>>(), space_from_string(j.at("space").get<std::string>())};
}

}  // namespace

Completion CachedTextGenerator::do_complete(const std::string& prompt, const GenerationParams& params) {
  json req{{"kind", "text"}, {"prompt", prompt}, {"params", params_json(params)}};
  json resp = cache_->through(inner_->id(), req, [&] {
    ++forwarded_;
    Completion c = inner_->complete(prompt, params);
    return json{{"text", c.text}, {"finish_reason", std::string(to_string(c.finish_reason))}};
  });
  return {resp.at("text").get<std::string>(),
          finish_reason_from_string(resp.at("finish_reason").get<std::string>())};
}

std::vector<std::uint8_t> CachedImageGenerator::do_generate(const std::string& prompt, int width,
                                                            int height) {
  json req{{"kind", "image"}, {"prompt", prompt}, {"width", width}, {"height", height}};
  json resp = cache_->through(inner_->id(), req, [&] {
    ++forwarded_;
    auto bytes = inner_->generate(prompt, width, height);
    return json{{"image_b64", base64_encode(bytes)}, {"sha256", sha256_hex(bytes)}};
  });
  auto bytes = base64_decode(resp.at("image_b64").get<std::string>());
  if (sha256_hex(bytes) != resp.at("sha256").get<std::string>()) {
    throw CacheIntegrityError("cached image does not match its digest");
  }
  return bytes;
}

std::string CachedCaptioner::do_caption(std::span<const std::uint8_t> image, const std::string& question) {
  json req{{"kind", "caption"}, {"image_sha256", sha256_hex(image)}, {"question", question}};
  json resp = cache_->through(inner_->id(), req, [&] {
    ++forwarded_;
    return json{{"caption", inner_->caption(image, question)}};
  });
  return resp.at("caption").get<std::string>();
}

EmbeddingVector CachedEmbedder::do_embed_text(const std::string& text, EmbeddingSpace space) {
  json req{{"kind", "embed"}, {"input", text}, {"space", std::string(to_string(space))}};
  json resp = cache_->through(inner_->id(), req, [&] {
    ++forwarded_;
    return vector_json(inner_->embed_text(text, space));
  });
  return vector_from_json(resp);
}

EmbeddingVector CachedEmbedder::do_embed_image(std::span<const std::uint8_t> image) {
  json req{{"kind", "embed"}, {"image_sha256", sha256_hex(image)}, {"space", "joint_image"}};
  json resp = cache_->through(inner_->id(), req, [&] {
    ++forwarded_;
    return vector_json(inner_->embed_image(image));
  });
  return vector_from_json(resp);
}

BackendSuite wrap_with_replay(const BackendSuite& suite, const std::string& cache_dir, CacheMode mode) {
  if (mode == CacheMode::off) return suite;
  auto cache = std::make_shared<ReplayCache>(cache_dir, mode);
  BackendSuite out = suite;
  if (suite.text) out.text = std::make_shared<CachedTextGenerator>(suite.text, cache);
  if (suite.image) out.image = std::make_shared<CachedImageGenerator>(suite.image, cache);
  if (suite.captioner) out.captioner = std::make_shared<CachedCaptioner>(suite.captioner, cache);
  std::vector<std::pair<Embedder*, std::shared_ptr<Embedder>>> wrapped;
  auto wrap = [&](const std::shared_ptr<Embedder>& e) -> std::shared_ptr<Embedder> {
    if (!e) return nullptr;
    for (auto& [raw, w] : wrapped) {
      if (raw == e.get()) return w;
    }
    auto w = std::make_shared<CachedEmbedder>(e, cache);
    wrapped.emplace_back(e.get(), w);
    return w;
  };
  out.sentence_embedder = wrap(suite.sentence_embedder);
  out.word_embedder = wrap(suite.word_embedder);
  out.joint_embedder = wrap(suite.joint_embedder);
  return out;
}

long forwarded_calls(const BackendSuite& s) {
  long n = 0;
  if (auto* t = dynamic_cast<CachedTextGenerator*>(s.text.get())) n += t->forwarded();
  if (auto* i = dynamic_cast<CachedImageGenerator*>(s.image.get())) n += i->forwarded();
  if (auto* c = dynamic_cast<CachedCaptioner*>(s.captioner.get())) n += c->forwarded();
  std::vector<const Embedder*> seen;
  for (const auto& e : {s.sentence_embedder, s.word_embedder, s.joint_embedder}) {
    auto* ce = dynamic_cast<CachedEmbedder*>(e.get());
    if (!ce) continue;
    bool dup = false;
    for (auto* p : seen) dup = dup || p == ce;
    if (dup) continue;
    seen.push_back(ce);
    n += ce->forwarded();
  }
  return n;
}

}  // namespace planweave
