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
 * Thinking-unit segmentation.
 *
 * Two routes:
 *  - segment_rule_based: a new unit starts at every sentence-initial
 *    occurrence of a lexicon marker ("Wait", "Alternatively", ...). The
 *    units concatenate back to the input byte-for-byte.
 *  - segment_remote: asks an LLM to insert "[split]" between reasoning
 *    rounds, then re-cuts the original text at the reported boundaries. When
 *    the reply does not reproduce the text, falls back to the rule route and
 *    flags the result.
 */

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "turnwise/backend.hpp"
#include "turnwise/prompts.hpp"
#include "turnwise/text.hpp"
#include "turnwise/types.hpp"

namespace turnwise {

class SegmentationError : public std::runtime_error {
 public:
  enum class Kind { kEmptyInput, kRoundTripMismatch };

  SegmentationError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Case-sensitive marker phrases. Construction reorders so that a marker
// never precedes a longer marker it is a prefix of.
class MarkerLexicon {
 public:
  explicit MarkerLexicon(std::vector<std::string> markers) {
    std::set<std::string> seen;
    for (auto& m : markers) {
      if (m.empty()) throw ValidationError("lexicon marker is empty");
      if (seen.insert(m).second) markers_.push_back(std::move(m));
    }
    if (markers_.empty()) throw ValidationError("lexicon is empty");
    // Longer first, so an extension is always tried before its prefix.
    std::stable_sort(markers_.begin(), markers_.end(),
                     [](const std::string& a, const std::string& b) {
                       return a.size() > b.size();
                     });
  }

  static MarkerLexicon default_segmentation() {
    return MarkerLexicon({"Wait", "Alternatively", "Hmm", "But wait",
                          "Let me double-check", "Let me verify",
                          "Another way", "Alternatively,"});
  }

  // Cue words used for unit-compactness checks and frequency tables.
  static MarkerLexicon default_cues() {
    return MarkerLexicon(
        {"Wait", "Alternatively", "double-check", "check", "verify"});
  }

  // One phrase per line, in file order; blank lines and lines starting with
  // '#' skipped.
  static std::vector<std::string> read_phrases(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open lexicon file: " + path);
    std::vector<std::string> phrases;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (text::trim(line).empty() || line.starts_with('#')) continue;
      phrases.emplace_back(line);
    }
    return phrases;
  }

  static MarkerLexicon load(const std::string& path) {
    return MarkerLexicon(read_phrases(path));
  }

  const std::vector<std::string>& markers() const { return markers_; }

 private:
  std::vector<std::string> markers_;
};

// Sorted, de-duplicated start offsets of sentence-initial marker occurrences.
inline std::vector<size_t> find_sentence_initial_markers(
    std::string_view s, const MarkerLexicon& lexicon) {
  std::vector<size_t> positions;
  for (size_t pos = 0; pos < s.size(); ++pos) {
    for (const auto& m : lexicon.markers()) {
      if (text::is_sentence_initial_phrase(s, pos, m)) {
        positions.push_back(pos);
        break;
      }
    }
  }
  return positions;
}

enum class SegmentationMethod { kRule, kRemote };

inline const char* to_string(SegmentationMethod m) {
  return m == SegmentationMethod::kRule ? "rule" : "remote";
}

struct SegmentationResult {
  std::vector<ThinkingUnit> units;
  SegmentationMethod method = SegmentationMethod::kRule;
  std::vector<size_t> boundaries;  // unit start offsets; first is 0
  bool fallback = false;           // remote reply rejected, rule route used
  std::string note;
};

inline SegmentationResult cut_at_boundaries(std::string_view think_text,
                                            std::vector<size_t> boundaries,
                                            SegmentationMethod method) {
  SegmentationResult r;
  r.method = method;
  r.boundaries = std::move(boundaries);
  for (size_t i = 0; i < r.boundaries.size(); ++i) {
    size_t begin = r.boundaries[i];
    size_t end = i + 1 < r.boundaries.size() ? r.boundaries[i + 1]
                                             : think_text.size();
    r.units.emplace_back(static_cast<int>(i) + 1,
                         std::string(think_text.substr(begin, end - begin)));
  }
  return r;
}

inline SegmentationResult segment_rule_based(std::string_view think_text,
                                             const MarkerLexicon& lexicon) {
  if (think_text.empty()) {
    throw SegmentationError(SegmentationError::Kind::kEmptyInput,
                            "think text is empty");
  }
  std::vector<size_t> boundaries{0};
  for (size_t pos : find_sentence_initial_markers(think_text, lexicon)) {
    if (pos != 0) boundaries.push_back(pos);
  }
  return cut_at_boundaries(think_text, std::move(boundaries),
                           SegmentationMethod::kRule);
}

enum class RoundTripPolicy { kStrict, kWhitespaceNormalized };

inline bool validate_round_trip(
    std::string_view original, const std::vector<ThinkingUnit>& units,
    RoundTripPolicy policy = RoundTripPolicy::kWhitespaceNormalized) {
  std::string joined;
  for (const auto& u : units) joined.append(u.text);
  if (policy == RoundTripPolicy::kStrict) return joined == original;
  return text::collapse_whitespace(joined) ==
         text::collapse_whitespace(original);
}

inline bool validate_round_trip(std::string_view original,
                                const std::vector<std::string>& unit_texts,
                                RoundTripPolicy policy =
                                    RoundTripPolicy::kWhitespaceNormalized) {
  std::string joined;
  for (const auto& u : unit_texts) joined.append(u);
  if (policy == RoundTripPolicy::kStrict) return joined == original;
  return text::collapse_whitespace(joined) ==
         text::collapse_whitespace(original);
}

// Maps the pieces of a "[split]" reply onto offsets of the original text by
// aligning non-whitespace characters. Returns nullopt when the reply's
// non-whitespace content differs from the original's.
inline std::optional<std::vector<size_t>> align_split_reply(
    std::string_view original, std::string_view reply) {
  std::vector<std::string_view> pieces;
  size_t start = 0;
  for (;;) {
    size_t at = reply.find(prompts::kSplitTag, start);
    pieces.push_back(reply.substr(start, at == std::string_view::npos
                                             ? std::string_view::npos
                                             : at - start));
    if (at == std::string_view::npos) break;
    start = at + prompts::kSplitTag.size();
  }

  std::vector<size_t> boundaries{0};
  size_t o = 0;
  for (std::string_view piece : pieces) {
    bool first_char = true;
    for (char c : piece) {
      if (text::is_space(c)) continue;
      while (o < original.size() && text::is_space(original[o])) ++o;
      if (o >= original.size() || original[o] != c) return std::nullopt;
      if (first_char && o != 0 && o != boundaries.back()) {
        boundaries.push_back(o);
      }
      first_char = false;
      ++o;
    }
  }
  while (o < original.size() && text::is_space(original[o])) ++o;
  if (o != original.size()) return std::nullopt;
  return boundaries;
}

struct RemoteSegmenterOptions {
  std::string prompt_template{prompts::kDecompositionTemplate};
  int max_tokens = 16384;
  // Sampling settings for the segmenting model are not published; greedy
  // decoding is a guess.
  double temperature = 0.0;
};

inline SegmentationResult segment_remote(
    std::string_view think_text, std::string_view question, Backend& backend,
    const RemoteSegmenterOptions& options = {},
    const MarkerLexicon& fallback_lexicon =
        MarkerLexicon::default_segmentation()) {
  if (think_text.empty()) {
    throw SegmentationError(SegmentationError::Kind::kEmptyInput,
                            "think text is empty");
  }
  if (!prompts::has_decomposition_placeholders(options.prompt_template)) {
    throw std::invalid_argument(
        "prompt template needs {question} and {prediction} placeholders");
  }
  GenerationRequest request;
  request.prompt = prompts::render_decomposition(options.prompt_template,
                                                 question, think_text);
  request.max_tokens = options.max_tokens;
  request.temperature = options.temperature;
  request.top_p = 1.0;
  GenerationResult reply = backend.generate(request);  // BackendError propagates

  if (auto boundaries = align_split_reply(think_text, reply.text)) {
    return cut_at_boundaries(think_text, std::move(*boundaries),
                             SegmentationMethod::kRemote);
  }
  SegmentationResult fallback = segment_rule_based(think_text, fallback_lexicon);
  fallback.fallback = true;
  fallback.note = SegmentationError(SegmentationError::Kind::kRoundTripMismatch,
                                    "remote reply altered the text")
                      .what();
  return fallback;
}

}  // namespace turnwise
