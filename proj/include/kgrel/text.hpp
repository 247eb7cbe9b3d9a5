#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace kgrel {

// A word character is an ASCII letter/digit, an apostrophe, or any byte of
// a multi-byte UTF-8 sequence. Everything else separates tokens.
inline bool is_word_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c == '\'' || c >= 0x80;
}

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

// Lowercase tokens with punctuation split off and dropped.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    if (is_word_char(static_cast<unsigned char>(ch))) {
      cur.push_back(ascii_lower(ch));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Canonical form of a concept surface: lowercase, underscores and
// whitespace runs become single spaces, surrounding punctuation stripped.
// Interior punctuation is preserved.
inline std::string normalize_surface(std::string_view raw) {
  std::string s;
  s.reserve(raw.size());
  for (char ch : raw) {
    s.push_back(ch == '_' ? ' ' : ascii_lower(ch));
  }
  std::size_t b = 0, e = s.size();
  while (b < e && !is_word_char(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && !is_word_char(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out;
  out.reserve(e - b);
  bool in_space = false;
  for (std::size_t i = b; i < e; ++i) {
    char ch = s[i];
    if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '\f' || ch == '\v') {
      in_space = true;
    } else {
      if (in_space && !out.empty()) out.push_back(' ');
      in_space = false;
      out.push_back(ch);
    }
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char delim) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == delim) {
      parts.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return parts;
}

inline std::string join(const std::vector<std::string>& parts, char delim) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(delim);
    out += parts[i];
  }
  return out;
}

}  // namespace kgrel
