#include "planweave/backends.hpp"

#include <cmath>

#include "planweave/errors.hpp"

namespace planweave {

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

FinishReason finish_reason_from_string(std::string_view tag) {
  if (tag == "stop") return FinishReason::stop;
  if (tag == "length") return FinishReason::length;
  if (tag == "error") return FinishReason::error;
  throw ParseError("unknown finish_reason '" + std::string(tag) + "'");
}

std::string_view to_string(EmbeddingSpace s) {
  switch (s) {
    case EmbeddingSpace::sentence: return "sentence";
    case EmbeddingSpace::word: return "word";
    case EmbeddingSpace::joint_text: return "joint_text";
    case EmbeddingSpace::joint_image: return "joint_image";
  }
  return "sentence";
}

EmbeddingSpace space_from_string(std::string_view tag) {
  if (tag == "sentence") return EmbeddingSpace::sentence;
  if (tag == "word") return EmbeddingSpace::word;
  if (tag == "joint_text") return EmbeddingSpace::joint_text;
  if (tag == "joint_image") return EmbeddingSpace::joint_image;
  throw ParseError("unknown embedding space '" + std::string(tag) + "'");
}

Completion TextGenerator::complete(const std::string& prompt, const GenerationParams& params) {
  if (trim(prompt).empty()) throw PreconditionError("text_complete: empty prompt");
  if (params.temperature < 0) throw PreconditionError("text_complete: negative temperature");
  if (params.max_tokens < 1) throw PreconditionError("text_complete: max_tokens must be positive");
  ++calls_;
  Completion c = do_complete(prompt, params);
  if (c.finish_reason != FinishReason::error && trim(c.text).empty()) {
    throw BackendError(BackendErrorKind::malformed, id() + ": empty completion");
  }
  return c;
}

std::vector<std::uint8_t> ImageGenerator::generate(const std::string& prompt, int width, int height) {
  if (trim(prompt).empty()) throw PreconditionError("image_generate: empty prompt");
  if (width < 64 || height < 64) {
    throw PreconditionError("image_generate: width and height must be >= 64, got " +
                            std::to_string(width) + "x" + std::to_string(height));
  }
  ++calls_;
  return do_generate(prompt, width, height);
}

std::string Captioner::caption(std::span<const std::uint8_t> image, const std::string& question) {
  if (trim(question).empty()) throw PreconditionError("caption: empty question");
  if (!probe_image(image)) throw PreconditionError("caption: image not decodable");
  ++calls_;
  std::string out = do_caption(image, question);
  if (trim(out).empty()) throw BackendError(BackendErrorKind::malformed, id() + ": empty caption");
  return out;
}

namespace {

void check_finite(const EmbeddingVector& v, const std::string& who) {
  if (v.values.empty()) throw BackendError(BackendErrorKind::malformed, who + ": empty embedding");
  for (double x : v.values) {
    if (!std::isfinite(x)) throw BackendError(BackendErrorKind::malformed, who + ": non-finite embedding");
  }
}

}  // namespace

EmbeddingVector Embedder::embed_text(const std::string& text, EmbeddingSpace space) {
  if (space == EmbeddingSpace::joint_image) {
    throw PreconditionError("embed_text: joint_image space takes an image");
  }
  if (!supports(space)) {
    throw BackendError(BackendErrorKind::unsupported,
                       id() + ": unsupported space " + std::string(to_string(space)));
  }
  if (trim(text).empty()) throw PreconditionError("embed: empty text");
  ++calls_;
  EmbeddingVector v = do_embed_text(text, space);
  check_finite(v, id());
  return v;
}

EmbeddingVector Embedder::embed_image(std::span<const std::uint8_t> image) {
  if (!supports(EmbeddingSpace::joint_image)) {
    throw BackendError(BackendErrorKind::unsupported, id() + ": unsupported space joint_image");
  }
  if (!probe_image(image)) throw PreconditionError("embed: image not decodable");
  ++calls_;
  EmbeddingVector v = do_embed_image(image);
  check_finite(v, id());
  return v;
}

std::string BackendSuite::fingerprint() const {
  return "text=" + (text ? text->id() : "none") + ";image=" + (image ? image->id() : "none") +
         ";caption=" + (captioner ? captioner->id() : "none");
}

std::string BackendSuite::embedder_fingerprint() const {
  return "sentence=" + (sentence_embedder ? sentence_embedder->id() : "none") +
         ";word=" + (word_embedder ? word_embedder->id() : "none") +
         ";joint=" + (joint_embedder ? joint_embedder->id() : "none");
}

long BackendSuite::total_calls() const {
  long n = 0;
  if (text) n += text->calls();
  if (image) n += image->calls();
  if (captioner) n += captioner->calls();
  // The same embedder object may serve several roles; count it once.
  std::vector<const Embedder*> seen;
  for (const auto& e : {sentence_embedder, word_embedder, joint_embedder}) {
    if (!e) continue;
    bool dup = false;
    for (auto* s : seen) dup = dup || s == e.get();
    if (!dup) {
      seen.push_back(e.get());
      n += e->calls();
    }
  }
  return n;
}

Completion text_complete(BackendSuite& b, const std::string& prompt, const GenerationParams& params) {
  if (!b.text) throw ConfigError("no text generator configured");
  return b.text->complete(prompt, params);
}

ImageHandle image_generate(BackendSuite& b, const std::string& prompt, int width, int height) {
  if (!b.image || !b.store) throw ConfigError("no image generator or image store configured");
  auto bytes = b.image->generate(prompt, width, height);
  auto info = probe_image(bytes);
  if (!info) throw BackendError(BackendErrorKind::malformed, b.image->id() + ": undecodable image");
  if (info->width != width || info->height != height) {
    throw BackendError(BackendErrorKind::malformed,
                       b.image->id() + ": returned " + std::to_string(info->width) + "x" +
                           std::to_string(info->height) + ", requested " + std::to_string(width) +
                           "x" + std::to_string(height));
  }
  return b.store->put(bytes);
}

std::string caption(BackendSuite& b, const ImageHandle& image, const std::string& question) {
  if (!b.captioner || !b.store) throw ConfigError("no captioner or image store configured");
  auto bytes = b.store->load(image);
  return b.captioner->caption(bytes, question);
}

EmbeddingVector embed(Embedder& e, const std::string& text, EmbeddingSpace space) {
  return e.embed_text(text, space);
}

EmbeddingVector embed(Embedder& e, const ImageStore& store, const ImageHandle& image) {
  auto bytes = store.load(image);
  return e.embed_image(bytes);
}

}  // namespace planweave
