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

/**
 * Value types shared by every turnwise module.
 *
 * A reasoning trace is the think segment of a think-then-answer response,
 * decomposed into thinking units. A multi-turn response interleaves those
 * units with intermediate answers:
 *
 *   <think>u_1</think>a_1<think>u_2</think>a_2 ... <think>u_n</think>a_n
 *
 * All types validate their invariants at construction and are immutable
 * values afterwards.
 */

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "turnwise/text.hpp"

namespace turnwise {

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline bool contains_think_tag(std::string_view s) {
  return s.find(kThinkOpen) != std::string_view::npos ||
         s.find(kThinkClose) != std::string_view::npos;
}

struct Query {
  std::string id;
  std::string problem;
  std::optional<std::string> gold_answer;

  Query() = default;
  Query(std::string id_, std::string problem_,
        std::optional<std::string> gold = std::nullopt)
      : id(std::move(id_)), problem(std::move(problem_)),
        gold_answer(std::move(gold)) {
    if (text::trim(problem).empty()) {
      throw ValidationError("query problem must be non-empty");
    }
  }
};

struct ThinkingUnit {
  int index = 1;  // 1-based
  std::string text;

  ThinkingUnit() = default;
  ThinkingUnit(int index_, std::string text_)
      : index(index_), text(std::move(text_)) {
    if (index < 1) throw ValidationError("unit index must be >= 1");
    if (text.empty()) throw ValidationError("thinking unit text is empty");
    if (contains_think_tag(text)) {
      throw ValidationError("thinking unit contains a think tag literal");
    }
  }

  friend bool operator==(const ThinkingUnit&, const ThinkingUnit&) = default;
};

struct ThinkTrace {
  std::string raw_text;
  std::vector<ThinkingUnit> units;
};

// Answers are stored trimmed: surrounding whitespace is not part of a_k.
struct Turn {
  ThinkingUnit unit;
  std::string answer;

  Turn() = default;
  Turn(ThinkingUnit unit_, std::string_view answer_)
      : unit(std::move(unit_)), answer(text::trim(answer_)) {
    if (answer.empty()) throw ValidationError("turn answer is empty");
    if (contains_think_tag(answer)) {
      throw ValidationError("turn answer contains a think tag literal");
    }
  }

  friend bool operator==(const Turn&, const Turn&) = default;
};

class MultiTurnResponse {
 public:
  explicit MultiTurnResponse(std::vector<Turn> turns)
      : turns_(std::move(turns)) {
    if (turns_.empty()) {
      throw ValidationError("multi-turn response needs at least one turn");
    }
    for (size_t i = 0; i < turns_.size(); ++i) {
      if (turns_[i].unit.index != static_cast<int>(i) + 1) {
        throw ValidationError("turn unit indices must be contiguous from 1");
      }
    }
  }

  const std::vector<Turn>& turns() const { return turns_; }
  size_t size() const { return turns_.size(); }
  const std::string& final_answer() const { return turns_.back().answer; }

  friend bool operator==(const MultiTurnResponse&,
                         const MultiTurnResponse&) = default;

 private:
  std::vector<Turn> turns_;
};

struct TokenStats {
  int64_t prompt_tokens = 0;
  int64_t output_tokens = 0;
  double ttft_ms = 0.0;
  double total_ms = 0.0;
  bool estimated = false;  // some count came from the whitespace estimate

  bool valid() const {
    return prompt_tokens >= 0 && output_tokens >= 0 && ttft_ms >= 0.0 &&
           ttft_ms <= total_ms;
  }

  TokenStats& operator+=(const TokenStats& o) {
    prompt_tokens += o.prompt_tokens;
    output_tokens += o.output_tokens;
    estimated = estimated || o.estimated;
    return *this;
  }
};

}  // namespace turnwise
