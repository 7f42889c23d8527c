#pragma once

// HTTP clients for remote model services.
//
//   text:     POST {base}/v1/chat/completions  {model, messages:[{role:"user",content}], temperature, max_tokens}
//   image:    POST {base}/generate             {prompt, width, height} -> {image_b64, format}
//   caption:  POST {base}/caption              {image_b64, question}   -> {caption}
//   embed:    POST {base}/embed                {input, space}          -> {vector:[...]}
//
// Transport failures, HTTP 429 and 5xx are retried with exponential backoff;
// other 4xx responses are refusals and surface immediately.

#include <chrono>
#include <functional>
#include <memory>
#include <semaphore>
#include <optional>

#include <json.hpp>

#include "planweave/backends.hpp"

namespace planweave {

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to std::this_thread::sleep_for
};

struct EndpointConfig {
  std::string base_url;  // scheme://host[:port][/prefix]
  std::string model;
  std::optional<std::string> bearer_token;
  std::chrono::seconds timeout{120};
  int max_in_flight = 4;  // per-backend request limit
  RetryPolicy retry;
};

/// POSTs JSON and parses the JSON reply, applying the retry policy.
class JsonHttpClient {
 public:
  explicit JsonHttpClient(EndpointConfig config);
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;
  const EndpointConfig& config() const noexcept { return config_; }

 private:
  EndpointConfig config_;
  std::string scheme_host_port_;
  std::string prefix_;
  std::shared_ptr<std::counting_semaphore<>> slots_;
};

class OpenAIChatGenerator : public TextGenerator {
 public:
  explicit OpenAIChatGenerator(EndpointConfig config) : http_(std::move(config)) {}
  std::string id() const override { return "openai-chat-" + http_.config().model; }
  static nlohmann::json build_request(const std::string& model, const std::string& prompt,
                                      const GenerationParams& params);
  static Completion parse_response(const nlohmann::json& response);

 protected:
  Completion do_complete(const std::string& prompt, const GenerationParams& params) override;

 private:
  JsonHttpClient http_;
};

class RestImageGenerator : public ImageGenerator {
 public:
  explicit RestImageGenerator(EndpointConfig config) : http_(std::move(config)) {}
  std::string id() const override { return "rest-image-" + http_.config().model; }

 protected:
  std::vector<std::uint8_t> do_generate(const std::string& prompt, int width, int height) override;

 private:
  JsonHttpClient http_;
};

class RestCaptioner : public Captioner {
 public:
  explicit RestCaptioner(EndpointConfig config) : http_(std::move(config)) {}
  std::string id() const override { return "rest-caption-" + http_.config().model; }

 protected:
  std::string do_caption(std::span<const std::uint8_t> image, const std::string& question) override;

 private:
  JsonHttpClient http_;
};

class RestEmbedder : public Embedder {
 public:
  explicit RestEmbedder(EndpointConfig config) : http_(std::move(config)) {}
  std::string id() const override { return "rest-embed-" + http_.config().model; }
  bool supports(EmbeddingSpace) const override { return true; }

 protected:
  EmbeddingVector do_embed_text(const std::string& text, EmbeddingSpace space) override;
  EmbeddingVector do_embed_image(std::span<const std::uint8_t> image) override;

 private:
  JsonHttpClient http_;
};

}  // namespace planweave
