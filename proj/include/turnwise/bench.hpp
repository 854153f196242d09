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
 * Benchmark runs: one session per record (times `repeat`), scored on the
 * final answer's last \boxed{} against gold.
 *
 * Failed sessions count as incorrect. Token and latency means are taken over
 * successful sessions only; `failed` reports how many were left out.
 */

#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "turnwise/controller.hpp"
#include "turnwise/parallel.hpp"
#include "turnwise/pipeline.hpp"
#include "turnwise/records.hpp"

namespace turnwise {

struct BenchRecord {
  std::string id;
  std::string problem;
  std::string gold;

  BenchRecord() = default;
  BenchRecord(std::string id_, std::string problem_, std::string gold_)
      : id(std::move(id_)), problem(std::move(problem_)), gold(std::move(gold_)) {
    if (id.empty() || text::trim(problem).empty() || text::trim(gold).empty()) {
      throw ValidationError("bench record fields must be non-empty");
    }
  }
};

inline std::vector<BenchRecord> load_bench_records(const std::string& path) {
  std::vector<BenchRecord> out;
  for (const auto& jl : read_jsonl(path)) {
    const auto& j = jl.value;
    std::string id = detail::string_field(j, "id", path, jl.line, true);
    std::string problem = detail::string_field(j, "problem", path, jl.line, true);
    std::string gold = detail::string_field(j, "answer", path, jl.line, false);
    if (gold.empty()) gold = detail::string_field(j, "gold", path, jl.line, false);
    try {
      out.emplace_back(id, problem, gold);
    } catch (const ValidationError& e) {
      throw InputError(path, jl.line, e.what());
    }
  }
  return out;
}

struct BenchRow {
  std::string id;
  int run = 0;  // repeat index
  bool correct = false;
  bool failed = false;
  std::string error;
  std::string final_answer;
  int turns = 0;
  int64_t prompt_tokens = 0;
  int64_t output_tokens = 0;
  int64_t think_tokens = 0;
  int64_t answer_tokens = 0;
  bool estimated = false;
  double ttft_ms = 0.0;
  double total_ms = 0.0;

  friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

struct BenchReport {
  size_t records = 0;  // rows, i.e. dataset size times repeat
  int repeat = 1;
  double accuracy = 0.0;
  size_t failed = 0;
  size_t estimated = 0;  // rows whose token counts are estimates
  std::optional<double> mean_output_tokens;
  std::optional<double> mean_think_tokens;
  std::optional<double> mean_answer_tokens;
  std::optional<double> mean_ttft_ms;
  std::optional<double> mean_total_ms;
  std::map<int, size_t> turn_histogram;
  std::vector<BenchRow> rows;

  friend bool operator==(const BenchReport&, const BenchReport&) = default;
};

inline BenchRow bench_one(const BenchRecord& record, int run, Backend& backend,
                          const SessionConfig& config) {
  BenchRow row;
  row.id = record.id;
  row.run = run;
  SessionResult r = run_session(Query(record.id, record.problem, record.gold),
                                config, backend);
  row.turns = static_cast<int>(r.turns.size());
  row.failed = r.status == SessionStatus::kFailed;
  row.error = r.error;
  if (r.response) {
    row.final_answer = r.response->final_answer();
    row.correct = !row.failed && answer_matches(row.final_answer, record.gold);
  }
  row.prompt_tokens = r.stats.prompt_tokens;
  row.output_tokens = r.stats.output_tokens;
  for (const auto& t : r.turns) {
    row.think_tokens += t.think_tokens;
    row.answer_tokens += t.answer_tokens;
  }
  row.estimated = r.stats.estimated;
  row.ttft_ms = r.stats.ttft_ms;
  row.total_ms = r.stats.total_ms;
  return row;
}

inline BenchReport summarize_bench(std::vector<BenchRow> rows, int repeat) {
  BenchReport rep;
  rep.repeat = repeat;
  rep.records = rows.size();
  size_t correct = 0, ok = 0;
  double out = 0, think = 0, ans = 0, ttft = 0, total = 0;
  for (const auto& r : rows) {
    correct += r.correct ? 1 : 0;
    ++rep.turn_histogram[r.turns];
    if (r.estimated) ++rep.estimated;
    if (r.failed) {
      ++rep.failed;
      continue;
    }
    ++ok;
    out += static_cast<double>(r.output_tokens);
    think += static_cast<double>(r.think_tokens);
    ans += static_cast<double>(r.answer_tokens);
    ttft += r.ttft_ms;
    total += r.total_ms;
  }
  if (!rows.empty()) {
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(rows.size());
  }
  if (ok > 0) {
    const double n = static_cast<double>(ok);
    rep.mean_output_tokens = out / n;
    rep.mean_think_tokens = think / n;
    rep.mean_answer_tokens = ans / n;
    rep.mean_ttft_ms = ttft / n;
    rep.mean_total_ms = total / n;
  }
  rep.rows = std::move(rows);
  return rep;
}

inline BenchReport run_bench(const std::vector<BenchRecord>& records,
                             Backend& backend, const SessionConfig& config,
                             int workers = 1, int repeat = 1) {
  if (repeat < 1) throw ValidationError("repeat must be >= 1");
  config.validate();
  const size_t n = records.size() * static_cast<size_t>(repeat);
  auto rows = parallel_map<BenchRow>(n, workers, [&](size_t i) {
    const size_t rec = i % records.size();
    const int run = static_cast<int>(i / records.size());
    SessionConfig c = config;
    if (c.seed) c.seed = *c.seed + static_cast<uint64_t>(run);
    return bench_one(records[rec], run, backend, c);
  });
  return summarize_bench(std::move(rows), repeat);
}

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace detail

// With include_timing=false the latency fields are dropped, leaving a
// report that is reproducible run to run on a deterministic backend.
inline nlohmann::json to_json(const BenchReport& r, bool include_timing = true) {
  using detail::opt_json;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j = {{"id", row.id},
                        {"run", row.run},
                        {"correct", row.correct},
                        {"failed", row.failed},
                        {"error", row.error},
                        {"final_answer", row.final_answer},
                        {"turns", row.turns},
                        {"prompt_tokens", row.prompt_tokens},
                        {"output_tokens", row.output_tokens},
                        {"think_tokens", row.think_tokens},
                        {"answer_tokens", row.answer_tokens},
                        {"estimated", row.estimated}};
    if (include_timing) {
      j["ttft_ms"] = row.ttft_ms;
      j["total_ms"] = row.total_ms;
    }
    rows.push_back(std::move(j));
  }
  nlohmann::json j = {{"records", r.records},
                      {"repeat", r.repeat},
                      {"accuracy", r.accuracy},
                      {"failed", r.failed},
                      {"estimated", r.estimated},
                      {"mean_output_tokens", opt_json(r.mean_output_tokens)},
                      {"mean_think_tokens", opt_json(r.mean_think_tokens)},
                      {"mean_answer_tokens", opt_json(r.mean_answer_tokens)},
                      {"turn_histogram", histogram_json(r.turn_histogram)},
                      {"rows", rows}};
  if (include_timing) {
    j["mean_ttft_ms"] = opt_json(r.mean_ttft_ms);
    j["mean_total_ms"] = opt_json(r.mean_total_ms);
  }
  return j;
}

inline BenchReport bench_report_from_json(const nlohmann::json& j) {
  using detail::opt_from;
  BenchReport r;
  r.records = j.at("records").get<size_t>();
  r.repeat = j.at("repeat").get<int>();
  r.accuracy = j.at("accuracy").get<double>();
  r.failed = j.at("failed").get<size_t>();
  r.estimated = j.at("estimated").get<size_t>();
  r.mean_output_tokens = opt_from(j.at("mean_output_tokens"));
  r.mean_think_tokens = opt_from(j.at("mean_think_tokens"));
  r.mean_answer_tokens = opt_from(j.at("mean_answer_tokens"));
  if (j.contains("mean_ttft_ms")) r.mean_ttft_ms = opt_from(j["mean_ttft_ms"]);
  if (j.contains("mean_total_ms")) r.mean_total_ms = opt_from(j["mean_total_ms"]);
  for (const auto& [k, v] : j.at("turn_histogram").items()) {
    r.turn_histogram[std::stoi(k)] = v.get<size_t>();
  }
  for (const auto& row : j.at("rows")) {
    BenchRow b;
    b.id = row.at("id").get<std::string>();
    b.run = row.at("run").get<int>();
    b.correct = row.at("correct").get<bool>();
    b.failed = row.at("failed").get<bool>();
    b.error = row.at("error").get<std::string>();
    b.final_answer = row.at("final_answer").get<std::string>();
    b.turns = row.at("turns").get<int>();
    b.prompt_tokens = row.at("prompt_tokens").get<int64_t>();
    b.output_tokens = row.at("output_tokens").get<int64_t>();
    b.think_tokens = row.at("think_tokens").get<int64_t>();
    b.answer_tokens = row.at("answer_tokens").get<int64_t>();
    b.estimated = row.at("estimated").get<bool>();
    b.ttft_ms = row.value("ttft_ms", 0.0);
    b.total_ms = row.value("total_ms", 0.0);
    r.rows.push_back(std::move(b));
  }
  return r;
}

inline std::string fmt_double(double v, int precision = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

inline void print_bench_table(std::ostream& os, const BenchReport& r) {
  auto opt = [](const std::optional<double>& v, int p = 1) {
    return v ? fmt_double(*v, p) : std::string("n/a");
  };
  os << "records            " << r.records << " (repeat " << r.repeat << ")\n";
  os << "accuracy           " << fmt_double(r.accuracy * 100.0, 1) << "%\n";
  os << "mean output tokens " << opt(r.mean_output_tokens) << "  (think "
     << opt(r.mean_think_tokens) << ", answer " << opt(r.mean_answer_tokens)
     << ")\n";
  os << "mean TTFT ms       " << opt(r.mean_ttft_ms) << "\n";
  os << "mean total ms      " << opt(r.mean_total_ms) << "\n";
  os << "failed (excluded)  " << r.failed << "\n";
  if (r.estimated > 0) os << "estimated counts   " << r.estimated << " rows\n";
  os << "turns histogram\n";
  for (const auto& [turns, count] : r.turn_histogram) {
    os << "  " << turns << " turn" << (turns == 1 ? " " : "s") << "  " << count
       << "\n";
  }
  os << "\nid\trun\tcorrect\tturns\toutput\tttft_ms\ttotal_ms\tanswer\n";
  for (const auto& row : r.rows) {
    os << row.id << '\t' << row.run << '\t'
       << (row.failed ? "FAILED" : row.correct ? "yes" : "no") << '\t'
       << row.turns << '\t' << row.output_tokens << '\t'
       << fmt_double(row.ttft_ms, 1) << '\t' << fmt_double(row.total_ms, 1)
       << '\t' << row.final_answer << '\n';
  }
}

}  // namespace turnwise
