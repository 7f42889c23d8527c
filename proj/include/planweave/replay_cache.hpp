#pragma once

// Record/replay cache for backend calls.
//
// Layout: {cache_dir}/{backend_id}/{request_digest}.record, where the digest
// is the SHA-256 of the canonical (sorted-key, whitespace-free) JSON request.
// Each record stores the request, the response and a checksum of the
// response; a mismatch on read is an integrity error, never a silent refetch.

#include <array>
#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "planweave/backends.hpp"

namespace planweave {

enum class CacheMode { off, record, replay, strict_replay };

std::string_view to_string(CacheMode m);
/// Accepts "off", "record", "replay", "strict-replay".
CacheMode cache_mode_from_string(std::string_view tag);
/// Reads PLANWEAVE_CACHE_MODE, falling back to `fallback` when unset.
CacheMode cache_mode_from_env(CacheMode fallback);

struct CacheKey {
  std::string backend_id;
  std::string request_digest;

  bool operator==(const CacheKey&) const = default;
};

/// Canonical text of a request: keys sorted, no insignificant whitespace.
std::string canonicalize(const nlohmann::json& request);
CacheKey make_cache_key(const std::string& backend_id, const nlohmann::json& request);

class ReplayCache {
 public:
  ReplayCache(std::string dir, CacheMode mode);

  CacheMode mode() const noexcept { return mode_; }
  const std::string& dir() const noexcept { return dir_; }
  std::string path_for(const CacheKey& key) const;

  /// Returns the response for `request`, calling `fetch` when the mode and
  /// cache contents require it. Concurrent calls for one key are serialized.
  nlohmann::json through(const std::string& backend_id, const nlohmann::json& request,
                         const std::function<nlohmann::json()>& fetch);

  long hits() const noexcept { return hits_.load(); }
  long misses() const noexcept { return misses_.load(); }

 private:
  std::optional<nlohmann::json> read(const CacheKey& key, const nlohmann::json& request) const;
  void write(const CacheKey& key, const nlohmann::json& request, const nlohmann::json& response);
  std::mutex& lock_for(const CacheKey& key);

  std::string dir_;
  CacheMode mode_;
  std::array<std::mutex, 64> stripes_;
  std::atomic<long> hits_{0};
  std::atomic<long> misses_{0};
};

// Wrappers: same contract as the wrapped backend; `calls()` on the wrapper
// counts every call, `forwarded()` only those that reached the backend.

class CachedTextGenerator : public TextGenerator {
 public:
  CachedTextGenerator(std::shared_ptr<TextGenerator> inner, std::shared_ptr<ReplayCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}
  std::string id() const override { return inner_->id(); }
  long forwarded() const noexcept { return forwarded_.load(); }

 protected:
  Completion do_complete(const std::string& prompt, const GenerationParams& params) override;

 private:
  std::shared_ptr<TextGenerator> inner_;
  std::shared_ptr<ReplayCache> cache_;
  std::atomic<long> forwarded_{0};
};

class CachedImageGenerator : public ImageGenerator {
 public:
  CachedImageGenerator(std::shared_ptr<ImageGenerator> inner, std::shared_ptr<ReplayCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}
  std::string id() const override { return inner_->id(); }
  long forwarded() const noexcept { return forwarded_.load(); }

 protected:
  std::vector<std::uint8_t> do_generate(const std::string& prompt, int width, int height) override;

 private:
  std::shared_ptr<ImageGenerator> inner_;
  std::shared_ptr<ReplayCache> cache_;
  std::atomic<long> forwarded_{0};
};

class CachedCaptioner : public Captioner {
 public:
  CachedCaptioner(std::shared_ptr<Captioner> inner, std::shared_ptr<ReplayCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}
  std::string id() const override { return inner_->id(); }
  long forwarded() const noexcept { return forwarded_.load(); }

 protected:
  std::string do_caption(std::span<const std::uint8_t> image, const std::string& question) override;

 private:
  std::shared_ptr<Captioner> inner_;
  std::shared_ptr<ReplayCache> cache_;
  std::atomic<long> forwarded_{0};
};

class CachedEmbedder : public Embedder {
 public:
  CachedEmbedder(std::shared_ptr<Embedder> inner, std::shared_ptr<ReplayCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}
  std::string id() const override { return inner_->id(); }
  bool supports(EmbeddingSpace space) const override { return inner_->supports(space); }
  long forwarded() const noexcept { return forwarded_.load(); }

 protected:
  EmbeddingVector do_embed_text(const std::string& text, EmbeddingSpace space) override;
  EmbeddingVector do_embed_image(std::span<const std::uint8_t> image) override;

 private:
  std::shared_ptr<Embedder> inner_;
  std::shared_ptr<ReplayCache> cache_;
  std::atomic<long> forwarded_{0};
};

/// Wraps every service of `suite` with a shared cache. Returns `suite`
/// unchanged when `mode` is off. Embedders shared between roles stay shared.
BackendSuite wrap_with_replay(const BackendSuite& suite, const std::string& cache_dir, CacheMode mode);

/// Number of calls that reached the underlying services of a wrapped suite.
long forwarded_calls(const BackendSuite& wrapped);

}  // namespace planweave
