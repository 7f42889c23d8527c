#include "planweave/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>
#include <filesystem>

#include "planweave/digest.hpp"
#include "planweave/errors.hpp"

namespace planweave {

namespace fs = std::filesystem;

namespace {

// libpng reports errors by longjmp; the message is parked here and rethrown
// as an exception once control is back in C++ frames.
thread_local std::string tl_png_error;

void png_error_jump(png_structp png, png_const_charp msg) {
  tl_png_error = msg ? msg : "unknown error";
  std::longjmp(png_jmpbuf(png), 1);
}
void png_warning_ignore(png_structp, png_const_charp) {}

void write_to_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

struct ReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void read_from_span(png_structp png, png_bytep data, png_size_t len) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + len > cur->bytes.size()) png_error(png, "unexpected end of data");
  std::memcpy(data, cur->bytes.data() + cur->offset, len);
  cur->offset += len;
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         p[3];
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RgbImage& image,
                                     const std::map<std::string, std::string>& text) {
  if (image.width < 1 || image.height < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw PreconditionError("encode_png: pixel buffer does not match dimensions");
  }
  std::vector<std::uint8_t> out;
  std::vector<png_text> chunks;
  std::vector<std::string> keys, values;
  for (const auto& [k, v] : text) {
    keys.push_back(k);
    values.push_back(v);
  }
  for (std::size_t i = 0; i < keys.size(); ++i) {
    png_text t{};
    t.compression = PNG_TEXT_COMPRESSION_NONE;
    t.key = keys[i].data();
    t.text = values[i].data();
    t.text_length = values[i].size();
    chunks.push_back(t);
  }
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_jump, png_warning_ignore);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("png encode: " + tl_png_error);
  }
  {
    png_set_write_fn(png, &out, write_to_vector, nullptr);
    png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    if (!chunks.empty()) png_set_text(png, info, chunks.data(), static_cast<int>(chunks.size()));
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y) {
      png_write_row(png, const_cast<png_bytep>(image.pixels.data() +
                                               static_cast<std::size_t>(y) * image.width * 3));
    }
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

DecodedPng decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw Error("not a PNG image");
  DecodedPng result;
  ReadCursor cursor{bytes, 0};
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_jump, png_warning_ignore);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("png decode: " + tl_png_error);
  }
  {
    png_set_read_fn(png, &cursor, read_from_span);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    result.image.width = w;
    result.image.height = h;
    result.image.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
      png_read_row(png, result.image.pixels.data() + static_cast<std::size_t>(y) * w * 3, nullptr);
    }
    png_read_end(png, info);
    png_textp text = nullptr;
    int n = png_get_text(png, info, &text, nullptr);
    for (int i = 0; i < n; ++i) {
      result.text[text[i].key] = std::string(text[i].text, text[i].text_length);
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return result;
}

std::optional<ImageInfo> probe_image(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (b.size() >= 24 && std::memcmp(b.data(), kPngSig, 8) == 0 &&
      std::memcmp(b.data() + 12, "IHDR", 4) == 0) {
    return ImageInfo{static_cast<int>(be32(b.data() + 16)), static_cast<int>(be32(b.data() + 20)),
                     "png"};
  }
  if (b.size() >= 10 && (std::memcmp(b.data(), "GIF87a", 6) == 0 ||
                         std::memcmp(b.data(), "GIF89a", 6) == 0)) {
    return ImageInfo{b[6] | (b[7] << 8), b[8] | (b[9] << 8), "gif"};
  }
  if (b.size() >= 4 && b[0] == 0xFF && b[1] == 0xD8) {
    std::size_t pos = 2;
    while (pos + 4 <= b.size()) {
      if (b[pos] != 0xFF) return std::nullopt;
      std::uint8_t marker = b[pos + 1];
      if (marker == 0xFF) {
        ++pos;
        continue;
      }
      if (marker == 0xD8 || (marker >= 0xD0 && marker <= 0xD7) || marker == 0x01) {
        pos += 2;
        continue;
      }
      std::size_t len = (b[pos + 2] << 8) | b[pos + 3];
      // SOF0..SOF15 except DHT (C4), JPG (C8) and DAC (CC).
      if (marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC) {
        if (pos + 9 > b.size()) return std::nullopt;
        int h = (b[pos + 5] << 8) | b[pos + 6];
        int w = (b[pos + 7] << 8) | b[pos + 8];
        return ImageInfo{w, h, "jpeg"};
      }
      pos += 2 + len;
    }
  }
  return std::nullopt;
}

ImageStore::ImageStore(std::string root) : root_(std::move(root)) {}

ImageHandle ImageStore::put(std::span<const std::uint8_t> bytes) {
  auto info = probe_image(bytes);
  if (!info) throw Error("image store: unrecognized image data");
  std::string locator = "images/" + sha256_hex(bytes) + "." + info->format;
  fs::path path = fs::path(root_) / locator;
  if (!fs::exists(path)) write_file_atomic(path.string(), bytes);
  return ImageHandle{locator, info->width, info->height, info->format};
}

std::string ImageStore::resolve(const std::string& locator) const {
  fs::path p(locator);
  if (p.is_absolute()) return p.string();
  return (fs::path(root_) / p).string();
}

std::vector<std::uint8_t> ImageStore::load(const ImageHandle& handle) const {
  const std::string path = resolve(handle.locator);
  if (!fs::exists(path)) throw Error("image not found: '" + handle.locator + "'");
  auto bytes = read_file_bytes(path);
  if (!probe_image(bytes)) throw Error("image not decodable: '" + handle.locator + "'");
  return bytes;
}

}  // namespace planweave
