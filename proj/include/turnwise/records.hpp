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
 * Line-delimited JSON record files.
 *
 * Trace records carry {id, problem, answer, think, response}: `answer` is
 * the gold answer, `think` the reasoning segment and `response` the final
 * answer text. A record may instead carry only `response` holding the full
 * "<think>...</think>answer" output, which is split on the first "</think>".
 */

#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "turnwise/pipeline.hpp"
#include "turnwise/segmenter.hpp"

namespace turnwise {

class InputError : public std::runtime_error {
 public:
  InputError(const std::string& path, int line, const std::string& message)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + message),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct JsonLine {
  int line = 0;
  nlohmann::json value;
};

inline std::vector<JsonLine> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path, 0, "cannot open file");
  std::vector<JsonLine> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (text::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw InputError(path, number, "invalid JSON");
    if (!j.is_object()) throw InputError(path, number, "record is not an object");
    out.push_back({number, std::move(j)});
  }
  return out;
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path);
  }
  void write(const nlohmann::json& j) { out_ << j.dump() << '\n'; }

 private:
  std::ofstream out_;
};

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

namespace detail {

inline std::string string_field(const nlohmann::json& j, const char* key,
                                const std::string& path, int line,
                                bool required) {
  if (!j.contains(key) || j[key].is_null()) {
    if (required) {
      throw InputError(path, line, std::string("missing field '") + key + "'");
    }
    return {};
  }
  if (j[key].is_string()) return j[key].get<std::string>();
  if (j[key].is_number()) return j[key].dump();
  throw InputError(path, line, std::string("field '") + key + "' must be a string");
}

}  // namespace detail

struct TraceFields {
  std::string id;
  std::string problem;
  std::optional<std::string> gold;
  std::string think;
  std::string response;  // final answer text
};

inline TraceFields trace_fields(const nlohmann::json& j, const std::string& path,
                                int line) {
  using detail::string_field;
  TraceFields f;
  f.id = string_field(j, "id", path, line, true);
  f.problem = string_field(j, "problem", path, line, true);
  std::string gold = string_field(j, "answer", path, line, false);
  if (!text::trim(gold).empty()) f.gold = gold;
  f.think = string_field(j, "think", path, line, false);
  f.response = string_field(j, "response", path, line, false);
  size_t close = f.response.find(kThinkClose);
  if (close != std::string::npos) {
    std::string_view head = std::string_view(f.response).substr(0, close);
    std::string tail = f.response.substr(close + kThinkClose.size());
    if (f.think.empty()) {
      size_t open = head.find(kThinkOpen);
      f.think = std::string(open == std::string_view::npos
                                ? head
                                : head.substr(open + kThinkOpen.size()));
    }
    f.response = tail;
  }
  if (f.think.empty()) throw InputError(path, line, "record has no think text");
  if (text::trim(f.problem).empty()) throw InputError(path, line, "problem is empty");
  return f;
}

inline RawTraceRecord to_trace_record(const TraceFields& f, const std::string& path,
                                      int line) {
  if (text::trim(f.response).empty()) {
    throw InputError(path, line, "record has no final answer text");
  }
  return RawTraceRecord(Query(f.id, f.problem, f.gold), f.think, f.response);
}

inline std::vector<RawTraceRecord> load_trace_records(const std::string& path) {
  std::vector<RawTraceRecord> out;
  for (const auto& jl : read_jsonl(path)) {
    out.push_back(to_trace_record(trace_fields(jl.value, path, jl.line), path,
                                  jl.line));
  }
  return out;
}

inline nlohmann::json to_json(const SegmentationResult& s) {
  nlohmann::json units = nlohmann::json::array();
  for (const auto& u : s.units) units.push_back(u.text);
  nlohmann::json j = {{"units", units},
                      {"segmentation",
                       {{"method", to_string(s.method)},
                        {"boundaries", s.boundaries},
                        {"fallback", s.fallback}}}};
  if (!s.note.empty()) j["segmentation"]["note"] = s.note;
  return j;
}

inline nlohmann::json to_json(const SftExample& e) {
  return {{"id", e.id}, {"prompt", e.prompt}, {"target", e.target}};
}

inline nlohmann::json to_json(const PrefixProbeResult& p) {
  nlohmann::json j = {{"k", p.k},
                      {"answer", p.answer},
                      {"correct", p.correct},
                      {"indeterminate", p.indeterminate}};
  if (!p.error.empty()) j["error"] = p.error;
  return j;
}

inline nlohmann::json to_json(const RedundancyReport& r) {
  return {{"n", r.n},
          {"n_star", r.n_star},
          {"final_correct", r.final_correct},
          {"urr", r.urr}};
}

inline nlohmann::json histogram_json(const std::map<int, size_t>& h) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : h) j[std::to_string(k)] = v;
  return j;
}

inline nlohmann::json to_json(const RedundancySummary& s) {
  return {{"count", s.count},
          {"mean_urr", s.mean_urr ? nlohmann::json(*s.mean_urr)
                                  : nlohmann::json(nullptr)},
          {"n_histogram", histogram_json(s.n_histogram)},
          {"n_star_histogram", histogram_json(s.n_star_histogram)}};
}

inline nlohmann::json pipeline_report_json(const PipelineResult& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& o : r.outcomes) {
    nlohmann::json row = {{"id", o.id}};
    if (o.segmentation) {
      row["n_units"] = o.segmentation->units.size();
      row["segmentation_fallback"] = o.segmentation->fallback;
    }
    nlohmann::json probes = nlohmann::json::array();
    for (const auto& p : o.probes) probes.push_back(to_json(p));
    row["probes"] = probes;
    if (o.report) row["redundancy"] = to_json(*o.report);
    row["sft"] = o.sft.has_value();
    if (!o.error.empty()) row["error"] = o.error;
    records.push_back(std::move(row));
  }
  return {{"input", r.input_count},
          {"missing_gold", r.missing_gold},
          {"rejected", r.rejected},
          {"kept", r.kept},
          {"probe_calls", r.probe_calls},
          {"sft_examples", r.sft_examples.size()},
          {"failed", r.failed},
          {"redundancy", to_json(r.redundancy)},
          {"records", records}};
}

}  // namespace turnwise
