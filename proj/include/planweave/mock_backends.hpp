#pragma once

// Deterministic stand-ins for the model services. Every output is a pure
// function of the canonical request (and seed), so plan records generated
// with mocks are byte-identical across runs.

#include <functional>
#include <map>
#include <utility>

#include "planweave/backends.hpp"

namespace planweave {

/// Behaviour by prompt shape:
///  - vanilla prompt ("... Task: ...?" on one line): "Step 1: ..." list with 3 + digest % 4 steps;
///  - step-based prompt: the next step, or DONE once 3 + digest(goal) % 4 steps exist;
///  - revision prompt: one revised step per initial step, mentioning its caption;
///  - anything else (imagination prompts): a scene description quoting the step.
class MockTextGenerator : public TextGenerator {
 public:
  explicit MockTextGenerator(std::int64_t seed = 0) : seed_(seed) {}
  std::string id() const override { return "mock-text"; }

 protected:
  Completion do_complete(const std::string& prompt, const GenerationParams& params) override;

 private:
  std::int64_t seed_;
};

/// Writes a PNG whose colour blocks derive from the prompt digest; the
/// prompt is kept in a tEXt chunk so the mock captioner and embedders can
/// recover what the image "shows".
class MockImageGenerator : public ImageGenerator {
 public:
  std::string id() const override { return "mock-image"; }

 protected:
  std::vector<std::uint8_t> do_generate(const std::string& prompt, int width, int height) override;
};

class MockCaptioner : public Captioner {
 public:
  std::string id() const override { return "mock-caption"; }

 protected:
  std::string do_caption(std::span<const std::uint8_t> image, const std::string& question) override;
};

/// Bag-of-hashed-words embedder for every space. Images carrying a mock
/// prompt chunk embed as that prompt's text, others by their byte digest.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(int dim = 64, std::string id = "hashing") : dim_(dim), id_(std::move(id)) {}
  std::string id() const override { return id_ + "-" + std::to_string(dim_); }
  bool supports(EmbeddingSpace) const override { return true; }

 protected:
  EmbeddingVector do_embed_text(const std::string& text, EmbeddingSpace space) override;
  EmbeddingVector do_embed_image(std::span<const std::uint8_t> image) override;

 private:
  int dim_;
  std::string id_;
};

/// Table-driven embedder for tests. Texts are looked up verbatim, images by
/// the SHA-256 of their bytes. Unknown keys throw BackendError(missing_entry).
class FixtureEmbedder : public Embedder {
 public:
  explicit FixtureEmbedder(std::string id = "fixture") : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  bool supports(EmbeddingSpace space) const override;

  FixtureEmbedder& add_text(EmbeddingSpace space, const std::string& text, std::vector<double> v);
  FixtureEmbedder& add_image(const std::string& image_sha256, std::vector<double> v);

 protected:
  EmbeddingVector do_embed_text(const std::string& text, EmbeddingSpace space) override;
  EmbeddingVector do_embed_image(std::span<const std::uint8_t> image) override;

 private:
  std::string id_;
  std::map<std::pair<EmbeddingSpace, std::string>, std::vector<double>> table_;
};

/// Text generator driven by a caller-supplied function.
class ScriptedTextGenerator : public TextGenerator {
 public:
  using Script = std::function<Completion(const std::string& prompt, const GenerationParams& params)>;
  ScriptedTextGenerator(std::string id, Script script) : id_(std::move(id)), script_(std::move(script)) {}
  std::string id() const override { return id_; }

 protected:
  Completion do_complete(const std::string& prompt, const GenerationParams& params) override {
    return script_(prompt, params);
  }

 private:
  std::string id_;
  Script script_;
};

/// All-mock suite writing images under `image_root`.
BackendSuite make_mock_suite(const std::string& image_root, std::int64_t seed = 0);

}  // namespace planweave
