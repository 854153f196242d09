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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

#include "turnwise/text.hpp"

namespace turnwise {

inline constexpr double kNumericAnswerTolerance = 1e-9;

// Content of the last balanced \boxed{...} group. Without one, the last
// non-blank line, trimmed. nullopt only for blank input.
inline std::optional<std::string> extract_boxed(std::string_view answer_text) {
  static constexpr std::string_view kBoxed = "\\boxed{";
  std::optional<std::string> found;
  for (size_t pos = answer_text.find(kBoxed); pos != std::string_view::npos;
       pos = answer_text.find(kBoxed, pos + 1)) {
    size_t begin = pos + kBoxed.size();
    int depth = 1;
    size_t i = begin;
    for (; i < answer_text.size() && depth > 0; ++i) {
      char c = answer_text[i];
      if (c == '\\' && i + 1 < answer_text.size()) {
        ++i;  // escaped brace does not count
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        --depth;
      }
    }
    if (depth == 0) found = std::string(answer_text.substr(begin, i - 1 - begin));
  }
  if (found) return found;

  auto lines = text::split_lines(answer_text);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    std::string_view line = text::trim(*it);
    if (!line.empty()) return std::string(line);
  }
  return std::nullopt;
}

namespace detail {

inline std::optional<double> parse_plain_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  bool has_digit = std::any_of(s.begin(), s.end(),
                               [](char c) { return c >= '0' && c <= '9'; });
  if (!has_digit) return std::nullopt;
  for (char c : s) {
    bool ok = (c >= '0' && c <= '9') || c == '.' || c == '-' || c == 'e' ||
              c == 'E' || c == '+';
    if (!ok) return std::nullopt;
  }
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

// "a/b", "\frac{a}{b}" (also \dfrac, \tfrac) or a plain decimal number.
inline std::optional<double> parse_numeric_answer(std::string_view s) {
  if (auto v = parse_plain_number(s)) return v;

  bool negative = false;
  std::string_view body = s;
  if (body.starts_with('-')) {
    negative = true;
    body.remove_prefix(1);
  }
  for (std::string_view cmd : {"\\frac{", "\\dfrac{", "\\tfrac{"}) {
    if (!body.starts_with(cmd) || !body.ends_with('}')) continue;
    std::string_view inner = body.substr(cmd.size(), body.size() - cmd.size() - 1);
    size_t mid = inner.find("}{");
    if (mid == std::string_view::npos) return std::nullopt;
    auto num = parse_plain_number(inner.substr(0, mid));
    auto den = parse_plain_number(inner.substr(mid + 2));
    if (!num || !den || *den == 0.0) return std::nullopt;
    double v = *num / *den;
    return negative ? -v : v;
  }

  size_t slash = s.find('/');
  if (slash != std::string_view::npos && s.find('/', slash + 1) == std::string_view::npos) {
    auto num = parse_plain_number(s.substr(0, slash));
    auto den = parse_plain_number(s.substr(slash + 1));
    if (num && den && *den != 0.0) return *num / *den;
  }
  return std::nullopt;
}

inline std::string canonical_decimal(double v) {
  if (v == 0.0) v = 0.0;  // drop the sign of negative zero
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string strip_delimiter_commands(std::string s) {
  for (std::string_view cmd : {"\\left", "\\right"}) {
    size_t pos = 0;
    while ((pos = s.find(cmd, pos)) != std::string::npos) {
      size_t end = pos + cmd.size();
      bool is_prefix_of_longer = end < s.size() &&
                                 ((s[end] >= 'a' && s[end] <= 'z') ||
                                  (s[end] >= 'A' && s[end] <= 'Z'));
      if (is_prefix_of_longer) {
        pos = end;
      } else {
        s.erase(pos, cmd.size());
      }
    }
  }
  return s;
}

inline std::string normalize_once(std::string_view in) {
  std::string s(text::trim(in));
  if (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
    s = s.substr(1, s.size() - 2);
  }
  s = strip_delimiter_commands(std::move(s));
  return text::collapse_whitespace(s);
}

}  // namespace detail

// Canonical comparison form of an answer. Strips surrounding whitespace,
// math-mode dollars and \left/\right, collapses whitespace runs, and maps
// anything numeric to its shortest round-trip decimal. Idempotent.
inline std::string normalize_answer(std::string_view raw) {
  std::string s(raw);
  // Every rewrite either shrinks the string or canonicalizes whitespace, so
  // this reaches a fixed point.
  for (;;) {
    std::string next = detail::normalize_once(s);
    if (next == s) break;
    s = std::move(next);
  }
  if (auto v = detail::parse_numeric_answer(s)) {
    return detail::canonical_decimal(*v);
  }
  return s;
}

inline bool numbers_close(double a, double b) {
  double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) <= kNumericAnswerTolerance * scale;
}

// Equality under normalize_answer: numeric answers within tolerance,
// everything else by exact string match of the normalized forms.
inline bool answers_equal(std::string_view a, std::string_view b) {
  std::string na = normalize_answer(a);
  std::string nb = normalize_answer(b);
  if (na == nb) return true;
  auto va = detail::parse_numeric_answer(na);
  auto vb = detail::parse_numeric_answer(nb);
  return va && vb && numbers_close(*va, *vb);
}

}  // namespace turnwise
