// Copyright 2026 The Turnwise Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace turnwise::text {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

inline bool is_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
         (c >= 'A' && c <= 'Z') || static_cast<unsigned char>(c) >= 0x80;
}

// Characters that belong to a lexeme for whole-word counting. Hyphens and
// apostrophes glue words together ("double-check", "let's").
inline bool is_word_char(char c) {
  return is_alnum(c) || c == '_' || c == '-' || c == '\'';
}

inline std::string_view trim(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

// Collapses every whitespace run to a single space and trims both ends.
inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

inline bool starts_with_at(std::string_view s, size_t pos,
                           std::string_view needle) {
  return pos <= s.size() && s.substr(pos).starts_with(needle);
}

inline size_t count_occurrences(std::string_view haystack,
                                std::string_view needle) {
  if (needle.empty()) return 0;
  size_t n = 0;
  for (size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

// A position begins a sentence when only whitespace separates it from the
// start of the text or from a '.', '?', '!' or newline.
inline bool is_sentence_start(std::string_view s, size_t pos) {
  size_t i = pos;
  while (i > 0) {
    char c = s[i - 1];
    if (c == '\n') return true;
    if (!is_space(c)) return c == '.' || c == '?' || c == '!';
    --i;
  }
  return true;
}

// True when `phrase` occurs at `pos` as a sentence-initial token: the match
// starts a sentence and is not immediately followed by a letter or digit.
inline bool is_sentence_initial_phrase(std::string_view s, size_t pos,
                                       std::string_view phrase) {
  if (phrase.empty() || !starts_with_at(s, pos, phrase)) return false;
  size_t end = pos + phrase.size();
  if (end < s.size() && is_alnum(s[end]) && is_alnum(phrase.back())) {
    return false;
  }
  return is_sentence_start(s, pos);
}

// Whole-word occurrences: neither neighbour of the match is a word character.
inline size_t count_whole_word(std::string_view s, std::string_view word) {
  if (word.empty()) return 0;
  size_t n = 0;
  for (size_t pos = s.find(word); pos != std::string_view::npos;
       pos = s.find(word, pos + 1)) {
    bool left_ok = pos == 0 || !is_word_char(s[pos - 1]);
    size_t end = pos + word.size();
    bool right_ok = end >= s.size() || !is_word_char(s[end]);
    if (left_ok && right_ok) {
      ++n;
      pos = end - 1;
    }
  }
  return n;
}

// Whitespace-piece token estimate: number of maximal non-whitespace runs.
inline int64_t estimate_tokens(std::string_view s) {
  int64_t n = 0;
  bool in_piece = false;
  for (char c : s) {
    bool ws = is_space(c);
    if (!ws && !in_piece) ++n;
    in_piece = !ws;
  }
  return n;
}

inline std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  size_t start = 0;
  while (start <= s.size()) {
    size_t nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < s.size()) lines.emplace_back(s.substr(start));
      break;
    }
    std::string_view line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = nl + 1;
  }
  return lines;
}

inline std::string replace_all(std::string s, std::string_view from,
                               std::string_view to) {
  if (from.empty()) return s;
  size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

}  // namespace turnwise::text
