#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "planweave/plan.hpp"

namespace planweave {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB, 3 bytes per pixel
};

/// Encodes an 8-bit RGB PNG; `text` entries become tEXt chunks. Output is a
/// pure function of the inputs (no timestamps).
std::vector<std::uint8_t> encode_png(const RgbImage& image,
                                     const std::map<std::string, std::string>& text = {});

struct DecodedPng {
  RgbImage image;
  std::map<std::string, std::string> text;
};

/// Full decode; throws Error on corrupt data.
DecodedPng decode_png(std::span<const std::uint8_t> bytes);

struct ImageInfo {
  int width = 0;
  int height = 0;
  std::string format;
};

/// Reads dimensions from a PNG, JPEG or GIF header without decoding pixels.
std::optional<ImageInfo> probe_image(std::span<const std::uint8_t> bytes);

/// Content-addressed image files under `root/images/`. Locators are relative
/// to `root` unless absolute.
class ImageStore {
 public:
  explicit ImageStore(std::string root);

  const std::string& root() const noexcept { return root_; }
  ImageHandle put(std::span<const std::uint8_t> bytes);
  std::string resolve(const std::string& locator) const;
  /// Throws Error naming the locator if the file is missing or not an image.
  std::vector<std::uint8_t> load(const ImageHandle& handle) const;

 private:
  std::string root_;
};

}  // namespace planweave
