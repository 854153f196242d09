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
 * Multi-turn training data from raw think-then-answer traces.
 *
 *   1. rejection_filter: keep traces whose final answer matches gold.
 *   2. segmentation: split each think segment into units (rule or remote).
 *   3. complete_intermediate_answers: for every prefix u_1..u_k, close the
 *      think block and let the model answer; the reply is a_k.
 *   4. build_sft_example: render (u_k, a_k) pairs as the multi-turn target.
 *
 * The same probes give the unit-level redundancy rate
 *
 *   URR = (n - n*) / n * 1[a_n correct],   n* = min{k : a_k correct}
 *
 * with n* = n when no prefix is correct.
 */

#include <algorithm>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "turnwise/answer.hpp"
#include "turnwise/backend.hpp"
#include "turnwise/format.hpp"
#include "turnwise/parallel.hpp"
#include "turnwise/prompts.hpp"
#include "turnwise/segmenter.hpp"
#include "turnwise/types.hpp"

namespace turnwise {

class PipelineError : public std::runtime_error {
 public:
  enum class Kind { kMissingGold, kIncompleteProbes, kBadProbes };

  PipelineError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct RawTraceRecord {
  Query query;
  std::string think_text;
  std::string final_answer_text;
  std::string source;  // free-form provenance of the trace, may be empty

  RawTraceRecord() = default;
  RawTraceRecord(Query q, std::string think, std::string answer,
                 std::string src = {})
      : query(std::move(q)), think_text(std::move(think)),
        final_answer_text(std::move(answer)), source(std::move(src)) {
    if (think_text.empty()) throw ValidationError("think text is empty");
    if (text::trim(final_answer_text).empty()) {
      throw ValidationError("final answer text is empty");
    }
  }
};

// Accuracy rule shared by rejection sampling, probes and R_accuracy: the
// last \boxed{} (or trailing line) of `answer_text` against gold.
inline bool answer_matches(std::string_view answer_text, std::string_view gold) {
  auto extracted = extract_boxed(answer_text);
  return extracted && answers_equal(*extracted, gold);
}

inline std::vector<RawTraceRecord> rejection_filter(
    const std::vector<RawTraceRecord>& records) {
  std::vector<RawTraceRecord> kept;
  for (const auto& r : records) {
    if (!r.query.gold_answer || text::trim(*r.query.gold_answer).empty()) {
      throw PipelineError(PipelineError::Kind::kMissingGold,
                          "record '" + r.query.id + "' has no gold answer");
    }
    if (answer_matches(r.final_answer_text, *r.query.gold_answer)) {
      kept.push_back(r);
    }
  }
  return kept;
}

struct PrefixProbeResult {
  int k = 1;
  std::string answer;
  bool correct = false;
  bool indeterminate = false;  // the probe failed; answer/correct meaningless
  std::string error;
};

struct ProbeOptions {
  double temperature = 0.6;
  double top_p = 0.95;
  int max_tokens = 32768;
  std::optional<uint64_t> seed;
};

inline std::string join_units(const std::vector<ThinkingUnit>& units,
                              size_t count) {
  std::string s;
  for (size_t i = 0; i < count && i < units.size(); ++i) s += units[i].text;
  return s;
}

inline GenerationRequest probe_request(const Query& query,
                                       const std::vector<ThinkingUnit>& units,
                                       size_t k, const ProbeOptions& options) {
  GenerationRequest req;
  req.prompt = prompts::render_qa(query.problem);
  req.assistant_prefix = std::string(kThinkOpen) + join_units(units, k);
  req.stop = {std::string(kThinkOpen)};
  req.max_tokens = options.max_tokens;
  req.temperature = options.temperature;
  req.top_p = options.top_p;
  req.seed = options.seed;
  return req;
}

// One request per prefix length k = 1..n, each closing the think block
// after u_k. Backend failures mark that k indeterminate and move on.
inline std::vector<PrefixProbeResult> complete_intermediate_answers(
    const Query& query, const std::vector<ThinkingUnit>& units,
    Backend& backend, const ProbeOptions& options = {}) {
  if (units.empty()) throw ValidationError("no thinking units to probe");
  std::vector<PrefixProbeResult> results;
  for (size_t k = 1; k <= units.size(); ++k) {
    PrefixProbeResult r;
    r.k = static_cast<int>(k);
    try {
      GenerationResult g = continue_with_forced_suffix(
          backend, probe_request(query, units, k, options), kThinkClose);
      r.answer = std::string(text::trim(g.text));
      if (r.answer.empty() || contains_think_tag(r.answer)) {
        r.indeterminate = true;
        r.error = "probe produced no usable answer";
      } else if (query.gold_answer) {
        r.correct = answer_matches(r.answer, *query.gold_answer);
      }
    } catch (const BackendError& e) {
      r.indeterminate = true;
      r.error = std::string(to_string(e.kind())) + ": " + e.what();
    }
    results.push_back(std::move(r));
  }
  return results;
}

struct SftExample {
  std::string id;
  std::string prompt;
  std::string target;
};

inline void check_probe_coverage(const std::vector<PrefixProbeResult>& probes) {
  if (probes.empty()) {
    throw PipelineError(PipelineError::Kind::kBadProbes, "no probe results");
  }
  for (size_t i = 0; i < probes.size(); ++i) {
    if (probes[i].k != static_cast<int>(i) + 1) {
      throw PipelineError(PipelineError::Kind::kBadProbes,
                          "probe results must cover k = 1..n in order");
    }
  }
}

inline SftExample build_sft_example(const Query& query,
                                    const std::vector<ThinkingUnit>& units,
                                    const std::vector<PrefixProbeResult>& probes) {
  check_probe_coverage(probes);
  if (probes.size() != units.size()) {
    throw PipelineError(PipelineError::Kind::kBadProbes,
                        "one probe per unit required");
  }
  std::vector<Turn> turns;
  for (size_t i = 0; i < units.size(); ++i) {
    if (probes[i].indeterminate) {
      throw PipelineError(PipelineError::Kind::kIncompleteProbes,
                          "probe k=" + std::to_string(i + 1) +
                              " is indeterminate");
    }
    turns.emplace_back(ThinkingUnit(static_cast<int>(i) + 1, units[i].text),
                       probes[i].answer);
  }
  return {query.id, prompts::render_qa(query.problem),
          render_multi_turn(MultiTurnResponse(std::move(turns)))};
}

struct RedundancyReport {
  int n = 0;
  int n_star = 0;
  bool final_correct = false;
  double urr = 0.0;
};

// Indeterminate probes count as not correct.
inline RedundancyReport compute_urr(const std::vector<PrefixProbeResult>& probes,
                                    bool final_correct) {
  check_probe_coverage(probes);
  RedundancyReport r;
  r.n = static_cast<int>(probes.size());
  r.n_star = r.n;
  for (const auto& p : probes) {
    if (p.correct && !p.indeterminate) {
      r.n_star = p.k;
      break;
    }
  }
  r.final_correct = final_correct;
  r.urr = final_correct ? static_cast<double>(r.n - r.n_star) /
                              static_cast<double>(r.n)
                        : 0.0;
  return r;
}

struct RedundancySummary {
  size_t count = 0;
  std::optional<double> mean_urr;  // absent for an empty corpus
  std::map<int, size_t> n_histogram;
  std::map<int, size_t> n_star_histogram;
};

inline RedundancySummary aggregate_redundancy(
    const std::vector<RedundancyReport>& reports) {
  RedundancySummary s;
  s.count = reports.size();
  double sum = 0.0;
  for (const auto& r : reports) {
    sum += r.urr;
    ++s.n_histogram[r.n];
    ++s.n_star_histogram[r.n_star];
  }
  if (!reports.empty()) sum /= static_cast<double>(reports.size());
  if (!reports.empty()) s.mean_urr = sum;
  return s;
}

// Case-sensitive whole-word counts, in cue order.
inline std::vector<std::pair<std::string, size_t>> cue_frequency(
    const std::vector<std::string>& texts, const std::vector<std::string>& cues) {
  std::vector<std::pair<std::string, size_t>> out;
  for (const auto& cue : cues) {
    size_t total = 0;
    for (const auto& t : texts) total += text::count_whole_word(t, cue);
    out.emplace_back(cue, total);
  }
  return out;
}

enum class SegmentationMode { kRule, kRemote };

struct PipelineOptions {
  SegmentationMode mode = SegmentationMode::kRule;
  MarkerLexicon lexicon = MarkerLexicon::default_segmentation();
  RemoteSegmenterOptions remote;
  ProbeOptions probe;
  int workers = 1;
};

struct RecordOutcome {
  std::string id;
  std::optional<SegmentationResult> segmentation;
  std::vector<PrefixProbeResult> probes;
  std::optional<RedundancyReport> report;
  std::optional<SftExample> sft;
  std::string error;  // set when the record produced no SFT example
};

struct PipelineResult {
  size_t input_count = 0;
  size_t missing_gold = 0;
  size_t rejected = 0;
  size_t kept = 0;
  size_t probe_calls = 0;
  size_t failed = 0;  // kept records without an SFT example
  std::vector<RecordOutcome> outcomes;  // kept records, input order
  std::vector<SftExample> sft_examples;
  RedundancySummary redundancy;
};

inline RecordOutcome process_record(const RawTraceRecord& record,
                                    Backend* backend,
                                    const PipelineOptions& options) {
  RecordOutcome out;
  out.id = record.query.id;
  try {
    if (options.mode == SegmentationMode::kRemote) {
      if (!backend) throw std::invalid_argument("remote mode needs a backend");
      out.segmentation = segment_remote(record.think_text, record.query.problem,
                                        *backend, options.remote,
                                        options.lexicon);
    } else {
      out.segmentation = segment_rule_based(record.think_text, options.lexicon);
    }
  } catch (const std::exception& e) {
    out.error = std::string("segmentation failed: ") + e.what();
    return out;
  }
  if (!backend) {
    out.error = "no backend for answer completion";
    return out;
  }
  const auto& units = out.segmentation->units;
  out.probes =
      complete_intermediate_answers(record.query, units, *backend, options.probe);
  // A record with any indeterminate probe has an unknown n*; leave it out of
  // the redundancy statistics as well as the SFT set.
  bool complete = std::none_of(out.probes.begin(), out.probes.end(),
                               [](const auto& p) { return p.indeterminate; });
  if (complete) out.report = compute_urr(out.probes, out.probes.back().correct);
  try {
    out.sft = build_sft_example(record.query, units, out.probes);
  } catch (const PipelineError& e) {
    out.error = e.what();
  }
  return out;
}

// Records lacking gold are counted and skipped rather than aborting the run.
inline PipelineResult run_pipeline(const std::vector<RawTraceRecord>& records,
                                   Backend* backend,
                                   const PipelineOptions& options = {}) {
  PipelineResult result;
  result.input_count = records.size();
  std::vector<RawTraceRecord> with_gold;
  for (const auto& r : records) {
    if (r.query.gold_answer && !text::trim(*r.query.gold_answer).empty()) {
      with_gold.push_back(r);
    } else {
      ++result.missing_gold;
    }
  }
  std::vector<RawTraceRecord> kept = rejection_filter(with_gold);
  result.kept = kept.size();
  result.rejected = with_gold.size() - kept.size();

  result.outcomes = parallel_map<RecordOutcome>(
      kept.size(), options.workers,
      [&](size_t i) { return process_record(kept[i], backend, options); });

  std::vector<RedundancyReport> reports;
  for (const auto& o : result.outcomes) {
    result.probe_calls += o.probes.size();
    if (o.report) reports.push_back(*o.report);
    if (o.sft) {
      result.sft_examples.push_back(*o.sft);
    } else {
      ++result.failed;
    }
  }
  result.redundancy = aggregate_redundancy(reports);
  return result;
}

}  // namespace turnwise
