#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace planweave {

/// Lowercased word tokens. Word characters are ASCII letters and digits plus
/// every byte >= 0x80 (so UTF-8 words stay intact); everything else splits.
/// Only ASCII is case-folded, which keeps the result locale-independent.
struct TokenSequence {
  std::vector<std::string> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  bool operator==(const TokenSequence&) const = default;
};

TokenSequence tokenize(std::string_view text);

/// Joins with '\n'.
std::string join_lines(const std::vector<std::string>& lines);

}  // namespace planweave
