// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace scgpt::text {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// True when `needle` occurs in `hay` at `pos` and respects word boundaries.
// A boundary is only demanded on an edge where the needle itself starts or
// ends with a word character, so values like "2.3 kg" or "?" still match.
inline bool word_match_at(std::string_view hay, std::string_view needle, std::size_t pos) {
  if (needle.empty() || pos + needle.size() > hay.size()) return false;
  if (hay.compare(pos, needle.size(), needle) != 0) return false;
  if (is_word_char(needle.front()) && pos > 0 && is_word_char(hay[pos - 1])) return false;
  const std::size_t end = pos + needle.size();
  if (is_word_char(needle.back()) && end < hay.size() && is_word_char(hay[end])) return false;
  return true;
}

// Claims non-overlapping word-boundary occurrences of each needle in `hay`.
// Needles are processed in the given order; an occurrence touching an already
// claimed character is skipped. `claimed` may be pre-seeded by the caller.
// Both `hay` and the needles must already be case-folded.
inline std::vector<std::vector<Span>> claim_matches(std::string_view hay,
                                                    const std::vector<std::string>& needles,
                                                    std::vector<bool>& claimed) {
  claimed.resize(hay.size(), false);
  std::vector<std::vector<Span>> result(needles.size());
  for (std::size_t n = 0; n < needles.size(); ++n) {
    const std::string& needle = needles[n];
    if (needle.empty()) continue;
    std::size_t pos = hay.find(needle);
    while (pos != std::string_view::npos) {
      const std::size_t end = pos + needle.size();
      bool free = word_match_at(hay, needle, pos);
      for (std::size_t i = pos; free && i < end; ++i) free = !claimed[i];
      if (free) {
        std::fill(claimed.begin() + static_cast<std::ptrdiff_t>(pos),
                  claimed.begin() + static_cast<std::ptrdiff_t>(end), true);
        result[n].push_back({pos, end});
        pos = hay.find(needle, end);
      } else {
        pos = hay.find(needle, pos + 1);
      }
    }
  }
  return result;
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace scgpt::text
