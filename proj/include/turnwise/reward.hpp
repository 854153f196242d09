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
 * Rollout reward R = R_format + R_accuracy + R_unit.
 *
 *              format  accuracy  unit
 *   pass         +1       +2       0
 *   fail         -1       -2     -0.3
 *
 * Accuracy and unit are forced to their fail values when the format check
 * fails, since neither the final answer nor the turn structure exists for
 * malformed text. Reachable totals with the defaults are therefore
 * {+3, +2.7, -1, -1.3, -3.3}.
 */

#include <optional>
#include <string>
#include <string_view>

#include "turnwise/answer.hpp"
#include "turnwise/format.hpp"
#include "turnwise/segmenter.hpp"
#include "turnwise/text.hpp"

namespace turnwise {

struct RewardConfig {
  double format_pass = 1.0;
  double format_fail = -1.0;
  double accuracy_pass = 2.0;
  double accuracy_fail = -2.0;
  double unit_pass = 0.0;
  double unit_fail = -0.3;

  void validate() const {
    if (format_pass < format_fail || accuracy_pass < accuracy_fail ||
        unit_pass < unit_fail) {
      throw ValidationError("reward pass value must be >= fail value");
    }
  }
};

struct RewardBreakdown {
  double format = 0.0;
  double accuracy = 0.0;
  double unit = 0.0;
  bool format_ok = false;
  bool accuracy_ok = false;
  bool unit_ok = false;

  double total() const { return format + accuracy + unit; }
};

inline bool check_format(std::string_view text) {
  try {
    parse_multi_turn(text);
    return true;
  } catch (const FormatError&) {
    return false;
  }
}

inline bool check_accuracy(const MultiTurnResponse& response,
                           std::string_view gold) {
  if (text::trim(gold).empty()) throw ValidationError("gold answer is empty");
  auto extracted = extract_boxed(response.final_answer());
  return extracted && answers_equal(*extracted, gold);
}

// A turn is compact when no cue starts a sentence after the opening one; a
// cue at the very start of the turn is the unit's own marker.
inline bool turn_is_compact(std::string_view think, const MarkerLexicon& cues) {
  size_t first = 0;
  while (first < think.size() && text::is_space(think[first])) ++first;
  for (size_t pos : find_sentence_initial_markers(think, cues)) {
    if (pos > first) return false;
  }
  return true;
}

inline bool check_unit_compactness(const MultiTurnResponse& response,
                                   const MarkerLexicon& cues) {
  for (const Turn& turn : response.turns()) {
    if (!turn_is_compact(turn.unit.text, cues)) return false;
  }
  return true;
}

inline RewardBreakdown compute_reward(
    std::string_view text, std::string_view gold,
    const RewardConfig& config = {},
    const MarkerLexicon& cues = MarkerLexicon::default_cues()) {
  RewardBreakdown r;
  std::optional<MultiTurnResponse> parsed;
  try {
    parsed.emplace(parse_multi_turn(text));
  } catch (const FormatError&) {
  }
  r.format_ok = parsed.has_value();
  r.accuracy_ok = parsed && check_accuracy(*parsed, gold);
  r.unit_ok = parsed && check_unit_compactness(*parsed, cues);
  r.format = r.format_ok ? config.format_pass : config.format_fail;
  r.accuracy = r.accuracy_ok ? config.accuracy_pass : config.accuracy_fail;
  r.unit = r.unit_ok ? config.unit_pass : config.unit_fail;
  return r;
}

}  // namespace turnwise
