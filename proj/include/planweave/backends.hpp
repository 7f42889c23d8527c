#pragma once

// Contracts for the external model services the pipeline talks to. Each
// service is an abstract class using the non-virtual-interface idiom: the
// public entry point checks preconditions and counts calls, subclasses
// implement `do_*`.

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "planweave/image_io.hpp"
#include "planweave/plan.hpp"

namespace planweave {

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason r);
FinishReason finish_reason_from_string(std::string_view tag);

struct Completion {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;

  bool operator==(const Completion&) const = default;
};

enum class EmbeddingSpace { sentence, word, joint_text, joint_image };

std::string_view to_string(EmbeddingSpace s);
EmbeddingSpace space_from_string(std::string_view tag);

struct EmbeddingVector {
  std::vector<double> values;
  EmbeddingSpace space = EmbeddingSpace::sentence;

  bool operator==(const EmbeddingVector&) const = default;
};

/// Caption question used for image verbalization.
inline constexpr std::string_view kDefaultCaptionQuestion = "what does the image describe";
inline constexpr int kDefaultImageSize = 512;

class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string id() const = 0;

  /// Throws PreconditionError on an empty prompt.
  Completion complete(const std::string& prompt, const GenerationParams& params);
  long calls() const noexcept { return calls_.load(); }

 protected:
  virtual Completion do_complete(const std::string& prompt, const GenerationParams& params) = 0;

 private:
  std::atomic<long> calls_{0};
};

class ImageGenerator {
 public:
  virtual ~ImageGenerator() = default;
  virtual std::string id() const = 0;

  /// Returns encoded image bytes of exactly width x height.
  std::vector<std::uint8_t> generate(const std::string& prompt, int width, int height);
  long calls() const noexcept { return calls_.load(); }

 protected:
  virtual std::vector<std::uint8_t> do_generate(const std::string& prompt, int width, int height) = 0;

 private:
  std::atomic<long> calls_{0};
};

class Captioner {
 public:
  virtual ~Captioner() = default;
  virtual std::string id() const = 0;

  std::string caption(std::span<const std::uint8_t> image, const std::string& question);
  long calls() const noexcept { return calls_.load(); }

 protected:
  virtual std::string do_caption(std::span<const std::uint8_t> image, const std::string& question) = 0;

 private:
  std::atomic<long> calls_{0};
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string id() const = 0;
  virtual bool supports(EmbeddingSpace space) const = 0;

  /// `space` must not be joint_image.
  EmbeddingVector embed_text(const std::string& text, EmbeddingSpace space);
  EmbeddingVector embed_image(std::span<const std::uint8_t> image);
  long calls() const noexcept { return calls_.load(); }

 protected:
  virtual EmbeddingVector do_embed_text(const std::string& text, EmbeddingSpace space) = 0;
  virtual EmbeddingVector do_embed_image(std::span<const std::uint8_t> image) = 0;

 private:
  std::atomic<long> calls_{0};
};

/// The full set of services one pipeline run uses, plus the image store that
/// generated images are persisted into.
struct BackendSuite {
  std::shared_ptr<TextGenerator> text;
  std::shared_ptr<ImageGenerator> image;
  std::shared_ptr<Captioner> captioner;
  std::shared_ptr<Embedder> sentence_embedder;
  std::shared_ptr<Embedder> word_embedder;
  std::shared_ptr<Embedder> joint_embedder;
  std::shared_ptr<ImageStore> store;

  /// "text=...;image=...;caption=..." identifying the generation backends.
  std::string fingerprint() const;
  /// Identifies the embedders, recorded alongside metric reports.
  std::string embedder_fingerprint() const;
  /// Sum of calls made to the generation and embedding services.
  long total_calls() const;
};

// Convenience operations over a suite, with the spec'd pre/postconditions.
Completion text_complete(BackendSuite& b, const std::string& prompt, const GenerationParams& params);
/// Generates, persists into the store and checks the returned dimensions.
ImageHandle image_generate(BackendSuite& b, const std::string& prompt,
                           int width = kDefaultImageSize, int height = kDefaultImageSize);
/// Throws Error naming the locator if the image is missing or undecodable.
std::string caption(BackendSuite& b, const ImageHandle& image,
                    const std::string& question = std::string(kDefaultCaptionQuestion));
EmbeddingVector embed(Embedder& e, const std::string& text, EmbeddingSpace space);
EmbeddingVector embed(Embedder& e, const ImageStore& store, const ImageHandle& image);

}  // namespace planweave
