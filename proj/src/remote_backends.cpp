#include "planweave/remote_backends.hpp"

#include <httplib.h>

#include <thread>

#include "planweave/digest.hpp"
#include "planweave/errors.hpp"

namespace planweave {

using nlohmann::json;

JsonHttpClient::JsonHttpClient(EndpointConfig config) : config_(std::move(config)) {
  const std::string& url = config_.base_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  if (path_start != std::string::npos) prefix_ = url.substr(path_start);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  if (!config_.retry.sleep) {
    config_.retry.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (config_.max_in_flight < 1) throw ConfigError("max_in_flight must be positive");
  slots_ = std::make_shared<std::counting_semaphore<>>(config_.max_in_flight);
}

json JsonHttpClient::post(const std::string& path, const json& body) const {
  const std::string full = prefix_ + path;
  auto backoff = config_.retry.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    std::optional<BackendError> failure;
    {
      slots_->acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{*slots_};
      httplib::Client cli(scheme_host_port_);
      cli.set_connection_timeout(config_.timeout);
      cli.set_read_timeout(config_.timeout);
      cli.set_write_timeout(config_.timeout);
      httplib::Headers headers;
      if (config_.bearer_token) headers.emplace("Authorization", "Bearer " + *config_.bearer_token);
      auto res = cli.Post(full, headers, body.dump(), "application/json");
      if (!res) {
        failure.emplace(BackendErrorKind::transport,
                        "POST " + full + ": " + httplib::to_string(res.error()));
      } else if (res->status == 429) {
        failure.emplace(BackendErrorKind::rate_limit, "POST " + full + ": rate limited");
      } else if (res->status >= 500) {
        failure.emplace(BackendErrorKind::transport,
                        "POST " + full + ": HTTP " + std::to_string(res->status));
      } else if (res->status >= 400) {
        throw BackendError(BackendErrorKind::refusal,
                           "POST " + full + ": HTTP " + std::to_string(res->status) + ": " + res->body);
      } else {
        try {
          return json::parse(res->body);
        } catch (const json::parse_error& e) {
          throw BackendError(BackendErrorKind::malformed, "POST " + full + ": " + e.what());
        }
      }
    }
    if (attempt >= config_.retry.attempts) throw *failure;
    config_.retry.sleep(backoff);
    backoff *= 2;
  }
}

json OpenAIChatGenerator::build_request(const std::string& model, const std::string& prompt,
                                        const GenerationParams& params) {
  json body{{"model", model},
            {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
            {"temperature", params.temperature},
            {"max_tokens", params.max_tokens}};
  if (params.seed) body["seed"] = *params.seed;
  return body;
}

Completion OpenAIChatGenerator::parse_response(const json& response) {
  try {
    const json& choice = response.at("choices").at(0);
    Completion c;
    const json& content = choice.at("message").at("content");
    c.text = content.is_null() ? "" : content.get<std::string>();
    const std::string reason = choice.value("finish_reason", "stop");
    c.finish_reason = reason == "length" ? FinishReason::length
                      : (reason == "stop" || reason.empty()) ? FinishReason::stop
                                                             : FinishReason::error;
    if (c.text.empty()) c.finish_reason = FinishReason::error;
    return c;
  } catch (const json::exception& e) {
    throw BackendError(BackendErrorKind::malformed, std::string("chat completion: ") + e.what());
  }
}

Completion OpenAIChatGenerator::do_complete(const std::string& prompt, const GenerationParams& params) {
  return parse_response(
      http_.post("/v1/chat/completions", build_request(http_.config().model, prompt, params)));
}

std::vector<std::uint8_t> RestImageGenerator::do_generate(const std::string& prompt, int width,
                                                          int height) {
  json resp = http_.post("/generate", json{{"prompt", prompt}, {"width", width}, {"height", height}});
  try {
    return base64_decode(resp.at("image_b64").get<std::string>());
  } catch (const json::exception& e) {
    throw BackendError(BackendErrorKind::malformed, std::string("image response: ") + e.what());
  }
}

std::string RestCaptioner::do_caption(std::span<const std::uint8_t> image, const std::string& question) {
  json resp = http_.post("/caption", json{{"image_b64", base64_encode(image)}, {"question", question}});
  try {
    return resp.at("caption").get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(BackendErrorKind::malformed, std::string("caption response: ") + e.what());
  }
}

namespace {

EmbeddingVector read_vector(const json& resp, EmbeddingSpace space) {
  try {
    return {resp.at("vector").get<std::vector<double>>(), space};
  } catch (const json::exception& e) {
    throw BackendError(BackendErrorKind::malformed, std::string("embed response: ") + e.what());
  }
}

}  // namespace

EmbeddingVector RestEmbedder::do_embed_text(const std::string& text, EmbeddingSpace space) {
  return read_vector(
      http_.post("/embed", json{{"input", text}, {"space", std::string(to_string(space))}}), space);
}

EmbeddingVector RestEmbedder::do_embed_image(std::span<const std::uint8_t> image) {
  return read_vector(http_.post("/embed", json{{"input", base64_encode(image)}, {"space", "joint_image"}}),
                     EmbeddingSpace::joint_image);
}

}  // namespace planweave
