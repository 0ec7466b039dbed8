#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace fade {

/// Half-open byte range in a text.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  friend auto operator<=>(const Span&, const Span&) = default;
};

/// A lowercased token together with its half-open byte range in the source text.
struct Token {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

/// ASCII letters and digits are word characters. Bytes >= 0x80 are treated as
/// word characters too so that UTF-8 sequences are never split.
inline bool is_word_byte(char c) noexcept {
  const auto u = static_cast<unsigned char>(c);
  return (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || u >= 0x80;
}

inline char ascii_lower(char c) noexcept {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = ascii_lower(c);
  return out;
}

inline std::vector<Token> tokenize_with_offsets(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_byte(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_byte(text[j])) ++j;
    tokens.push_back({to_lower(text.substr(i, j - i)), i, j});
    i = j;
  }
  return tokens;
}

/// Lowercase and split on any run of non-alphanumeric characters.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : tokenize_with_offsets(text)) out.push_back(std::move(t.text));
  return out;
}

/// Case-insensitive search for `needle` in `haystack` where the match must not
/// be glued to neighbouring word characters. Returns npos when absent.
inline std::size_t find_surface(std::string_view haystack_lower, std::string_view needle_lower,
                                std::size_t from = 0) {
  if (needle_lower.empty()) return std::string_view::npos;
  while (from <= haystack_lower.size()) {
    const auto pos = haystack_lower.find(needle_lower, from);
    if (pos == std::string_view::npos) return pos;
    const auto end = pos + needle_lower.size();
    const bool left_ok = pos == 0 || !is_word_byte(haystack_lower[pos - 1]) ||
                         !is_word_byte(needle_lower.front());
    const bool right_ok = end == haystack_lower.size() || !is_word_byte(haystack_lower[end]) ||
                          !is_word_byte(needle_lower.back());
    if (left_ok && right_ok) return pos;
    from = pos + 1;
  }
  return std::string_view::npos;
}

inline bool contains_surface(std::string_view haystack, std::string_view surface) {
  return find_surface(to_lower(haystack), to_lower(surface)) != std::string_view::npos;
}

}  // namespace fade
