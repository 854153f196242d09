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

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "turnwise/types.hpp"

namespace turnwise {

enum class FormatErrorKind {
  kEmptyText,
  kTextBeforeThink,
  kUnclosedThink,
  kNestedThink,
  kUnopenedClose,
  kEmptyThink,
  kEmptyAnswer,
  kMissingAnswer,  // trailing think block with nothing after it
};

inline const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kEmptyText: return "empty text";
    case FormatErrorKind::kTextBeforeThink: return "text before first <think>";
    case FormatErrorKind::kUnclosedThink: return "unclosed <think>";
    case FormatErrorKind::kNestedThink: return "nested <think>";
    case FormatErrorKind::kUnopenedClose: return "</think> without <think>";
    case FormatErrorKind::kEmptyThink: return "empty think block";
    case FormatErrorKind::kEmptyAnswer: return "empty answer between blocks";
    case FormatErrorKind::kMissingAnswer: return "think block with no answer";
  }
  return "format error";
}

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, size_t position)
      : std::runtime_error(std::string(to_string(kind)) + " at byte " +
                           std::to_string(position)),
        kind_(kind), position_(position) {}

  FormatErrorKind kind() const { return kind_; }
  size_t position() const { return position_; }

 private:
  FormatErrorKind kind_;
  size_t position_;
};

// Byte-exact rendering: no separators are inserted between blocks.
inline std::string render_multi_turn(const MultiTurnResponse& response) {
  std::string out;
  for (const Turn& turn : response.turns()) {
    out.append(kThinkOpen);
    out.append(turn.unit.text);
    out.append(kThinkClose);
    out.append(turn.answer);
  }
  return out;
}

inline std::string render_turns(const std::vector<Turn>& turns) {
  if (turns.empty()) return {};
  return render_multi_turn(MultiTurnResponse(turns));
}

// Strict parser. Whitespace before the first <think>, around answers and
// between an answer and the next <think> is tolerated; answers are trimmed.
// Think bodies are returned byte-for-byte.
inline MultiTurnResponse parse_multi_turn(std::string_view text) {
  size_t pos = 0;
  while (pos < text.size() && text::is_space(text[pos])) ++pos;
  if (pos == text.size()) throw FormatError(FormatErrorKind::kEmptyText, 0);
  if (!text::starts_with_at(text, pos, kThinkOpen)) {
    size_t close = text.find(kThinkClose);
    size_t open = text.find(kThinkOpen);
    if (close != std::string_view::npos && close < open) {
      throw FormatError(FormatErrorKind::kUnopenedClose, close);
    }
    throw FormatError(FormatErrorKind::kTextBeforeThink, pos);
  }

  std::vector<Turn> turns;
  while (pos < text.size()) {
    const size_t open = pos;
    const size_t body = open + kThinkOpen.size();
    const size_t close = text.find(kThinkClose, body);
    const size_t next_open = text.find(kThinkOpen, body);
    if (close == std::string_view::npos) {
      if (next_open != std::string_view::npos) {
        throw FormatError(FormatErrorKind::kNestedThink, next_open);
      }
      throw FormatError(FormatErrorKind::kUnclosedThink, open);
    }
    if (next_open != std::string_view::npos && next_open < close) {
      throw FormatError(FormatErrorKind::kNestedThink, next_open);
    }
    if (close == body) throw FormatError(FormatErrorKind::kEmptyThink, body);

    const size_t answer_begin = close + kThinkClose.size();
    const size_t answer_end =
        next_open == std::string_view::npos ? text.size() : next_open;
    std::string_view answer =
        text.substr(answer_begin, answer_end - answer_begin);
    if (size_t stray = answer.find(kThinkClose);
        stray != std::string_view::npos) {
      throw FormatError(FormatErrorKind::kUnopenedClose, answer_begin + stray);
    }
    if (text::trim(answer).empty()) {
      throw FormatError(next_open == std::string_view::npos
                            ? FormatErrorKind::kMissingAnswer
                            : FormatErrorKind::kEmptyAnswer,
                        answer_begin);
    }
    ThinkingUnit unit(static_cast<int>(turns.size()) + 1,
                      std::string(text.substr(body, close - body)));
    turns.emplace_back(std::move(unit), answer);
    pos = answer_end;
  }
  return MultiTurnResponse(std::move(turns));
}

}  // namespace turnwise
