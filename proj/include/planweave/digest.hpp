#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace planweave {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);
std::string sha256_hex(std::span<const std::uint8_t> data);

/// First 8 bytes of the SHA-256 of `data`, big-endian.
std::uint64_t digest64(std::string_view data);

std::string base64_encode(std::span<const std::uint8_t> data);
/// Throws ParseError on characters outside the standard alphabet.
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
/// Writes via a temporary file and rename so readers never see partial content.
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> data);
void write_file_atomic(const std::string& path, std::string_view data);

}  // namespace planweave
