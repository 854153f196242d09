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

// The `turnwise` command line. Exit codes: 0 success, 1 runtime failure,
// 2 usage or input error.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "turnwise/bench.hpp"
#include "turnwise/config.hpp"
#include "turnwise/gateway.hpp"
#include "turnwise/openai_client.hpp"
#include "turnwise/pipeline.hpp"
#include "turnwise/records.hpp"
#include "turnwise/reward.hpp"

namespace turnwise::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string input;
  std::string output;
  std::string backend_config;
  std::string lexicon;
  std::string cues;
  std::string mode = "rule";
  std::string gold;
  std::string reward_config;
  std::string prompt_template;
  std::string report;
  std::string halt_policy;
  std::string host;
  int max_turns = 0;
  int workers = 1;
  int repeat = 1;
  int port = -1;
  std::optional<uint64_t> seed;
};

struct Context {
  const Options& opt;
  std::ostream& out;
  std::ostream& err;
  EnvLookup env;
};

inline AppConfig app_config(const Context& c) {
  std::optional<std::string> path;
  if (!c.opt.backend_config.empty()) path = c.opt.backend_config;
  return load_app_config(path, c.env);
}

inline bool backend_configured(const Context& c) {
  return !c.opt.backend_config.empty() || c.env("TURNWISE_BACKEND_URL");
}

inline SegmentationMode segmentation_mode(const Context& c) {
  if (c.opt.mode == "rule") return SegmentationMode::kRule;
  if (c.opt.mode == "remote") {
    if (!backend_configured(c)) {
      throw UsageError("--mode remote needs --backend-config");
    }
    return SegmentationMode::kRemote;
  }
  throw UsageError("--mode must be 'rule' or 'remote'");
}

inline MarkerLexicon segmentation_lexicon(const Context& c) {
  return c.opt.lexicon.empty() ? MarkerLexicon::default_segmentation()
                               : MarkerLexicon::load(c.opt.lexicon);
}

inline MarkerLexicon cue_lexicon(const Context& c) {
  return c.opt.cues.empty() ? MarkerLexicon::default_cues()
                            : MarkerLexicon::load(c.opt.cues);
}

inline RemoteSegmenterOptions remote_options(const Context& c) {
  RemoteSegmenterOptions r;
  if (!c.opt.prompt_template.empty()) {
    r.prompt_template = prompts::load_template_file(c.opt.prompt_template);
  }
  return r;
}

inline void print_histogram(std::ostream& os, const std::string& title,
                            const std::map<int, size_t>& h) {
  os << title << "\n";
  for (const auto& [k, v] : h) os << "  " << k << "\t" << v << "\n";
}

inline int cmd_segment(const Context& c) {
  const SegmentationMode mode = segmentation_mode(c);
  const MarkerLexicon lexicon = segmentation_lexicon(c);
  const RemoteSegmenterOptions remote = remote_options(c);
  std::unique_ptr<OpenAiClient> backend;
  if (mode == SegmentationMode::kRemote) {
    backend = std::make_unique<OpenAiClient>(app_config(c).backend);
  }

  const auto lines = read_jsonl(c.opt.input);
  std::vector<TraceFields> fields;
  for (const auto& jl : lines) fields.push_back(trace_fields(jl.value, c.opt.input, jl.line));

  struct Outcome {
    std::optional<SegmentationResult> seg;
    std::string error;
  };
  auto outcomes = parallel_map<Outcome>(fields.size(), c.opt.workers, [&](size_t i) {
    Outcome o;
    try {
      o.seg = mode == SegmentationMode::kRemote
                  ? segment_remote(fields[i].think, fields[i].problem, *backend,
                                   remote, lexicon)
                  : segment_rule_based(fields[i].think, lexicon);
    } catch (const std::exception& e) {
      o.error = e.what();
    }
    return o;
  });

  JsonlWriter writer(c.opt.output);
  std::map<int, size_t> hist;
  size_t ok = 0;
  for (size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    if (!o.seg) {
      c.err << "segmentation failed for " << fields[i].id << ": " << o.error << "\n";
      continue;
    }
    ++ok;
    nlohmann::json rec = lines[i].value;
    nlohmann::json seg = to_json(*o.seg);
    rec["units"] = seg["units"];
    rec["segmentation"] = seg["segmentation"];
    rec["segmentation"]["round_trip"] =
        validate_round_trip(fields[i].think, o.seg->units, RoundTripPolicy::kStrict);
    writer.write(rec);
    ++hist[static_cast<int>(o.seg->units.size())];
    if (o.seg->fallback) {
      c.out << "round-trip mismatch for " << fields[i].id
            << ": remote reply rejected, rule segmentation used\n";
    }
  }
  c.out << "segmented " << ok << " of " << fields.size() << " records ("
        << to_string(mode == SegmentationMode::kRule ? SegmentationMethod::kRule
                                                     : SegmentationMethod::kRemote)
        << ")\n";
  print_histogram(c.out, "units per record", hist);
  return ok == 0 && !fields.empty() ? kExitFailure : kExitOk;
}

inline PipelineOptions pipeline_options(const Context& c) {
  PipelineOptions p;
  p.mode = segmentation_mode(c);
  p.lexicon = segmentation_lexicon(c);
  p.remote = remote_options(c);
  p.workers = c.opt.workers;
  p.probe.seed = c.opt.seed;
  return p;
}

inline void print_redundancy(std::ostream& os, const PipelineResult& r) {
  os << "id\tn\tn*\tfinal\tURR\n";
  for (const auto& o : r.outcomes) {
    if (!o.report) continue;
    os << o.id << '\t' << o.report->n << '\t' << o.report->n_star << '\t'
       << (o.report->final_correct ? "correct" : "wrong") << '\t'
       << fmt_double(o.report->urr, 4) << '\n';
  }
  os << "mean URR: "
     << (r.redundancy.mean_urr ? fmt_double(*r.redundancy.mean_urr, 4) : "n/a")
     << " over " << r.redundancy.count << " records\n";
  print_histogram(os, "n histogram", r.redundancy.n_histogram);
  print_histogram(os, "n* histogram", r.redundancy.n_star_histogram);
}

inline int cmd_build_data(const Context& c) {
  if (!backend_configured(c)) throw UsageError("build-data needs --backend-config");
  PipelineOptions popt = pipeline_options(c);
  auto records = load_trace_records(c.opt.input);
  AppConfig cfg = app_config(c);
  OpenAiClient backend(cfg.backend);
  PipelineResult r = run_pipeline(records, &backend, popt);

  JsonlWriter writer(c.opt.output);
  for (const auto& e : r.sft_examples) writer.write(to_json(e));
  if (!c.opt.report.empty()) write_json_file(c.opt.report, pipeline_report_json(r));

  c.out << "input " << r.input_count << ", missing gold " << r.missing_gold
        << ", rejected " << r.rejected << ", kept " << r.kept << "\n";
  c.out << "probe calls " << r.probe_calls << ", SFT examples "
        << r.sft_examples.size() << ", failed " << r.failed << "\n";
  for (const auto& o : r.outcomes) {
    if (!o.error.empty()) c.err << o.id << ": " << o.error << "\n";
  }
  print_redundancy(c.out, r);
  return r.kept > 0 && r.sft_examples.empty() ? kExitFailure : kExitOk;
}

inline int cmd_analyze_redundancy(const Context& c) {
  auto records = load_trace_records(c.opt.input);
  std::vector<std::string> texts;
  for (const auto& r : records) texts.push_back(r.think_text);
  c.out << "cue word frequency\n";
  nlohmann::json cue_json = nlohmann::json::object();
  const std::vector<std::string> words =
      c.opt.cues.empty()
          ? std::vector<std::string>{"Wait", "Alternatively", "double-check",
                                     "check", "verify"}
          : MarkerLexicon::read_phrases(c.opt.cues);
  for (const auto& [word, count] : cue_frequency(texts, words)) {
    c.out << "  " << word << "\t" << count << "\n";
    cue_json[word] = count;
  }

  nlohmann::json report = {{"cue_frequency", cue_json}};
  if (backend_configured(c)) {
    PipelineOptions popt = pipeline_options(c);
    AppConfig cfg = app_config(c);
    OpenAiClient backend(cfg.backend);
    PipelineResult r = run_pipeline(records, &backend, popt);
    print_redundancy(c.out, r);
    report["pipeline"] = pipeline_report_json(r);
  } else {
    const MarkerLexicon lexicon = segmentation_lexicon(c);
    std::map<int, size_t> hist;
    for (const auto& r : records) {
      ++hist[static_cast<int>(segment_rule_based(r.think_text, lexicon).units.size())];
    }
    print_histogram(c.out, "units per record (rule segmentation)", hist);
    report["unit_histogram"] = histogram_json(hist);
  }
  if (!c.opt.output.empty()) write_json_file(c.opt.output, report);
  return kExitOk;
}

inline int cmd_reward_eval(const Context& c) {
  if (c.opt.gold.empty()) throw UsageError("reward-eval needs --gold");
  RewardConfig rc = c.opt.reward_config.empty()
                        ? RewardConfig{}
                        : load_reward_config(c.opt.reward_config);
  MarkerLexicon cues = cue_lexicon(c);

  std::map<std::string, std::string> gold;
  for (const auto& jl : read_jsonl(c.opt.gold)) {
    std::string id = detail::string_field(jl.value, "id", c.opt.gold, jl.line, true);
    std::string g = detail::string_field(jl.value, "answer", c.opt.gold, jl.line, false);
    if (g.empty()) g = detail::string_field(jl.value, "gold", c.opt.gold, jl.line, true);
    if (!gold.emplace(id, g).second) {
      throw InputError(c.opt.gold, jl.line, "duplicate id '" + id + "'");
    }
  }
  struct Row {
    std::string id;
    std::string response;
  };
  std::vector<Row> rows;
  std::set<std::string> seen;
  for (const auto& jl : read_jsonl(c.opt.input)) {
    std::string id = detail::string_field(jl.value, "id", c.opt.input, jl.line, true);
    if (!seen.insert(id).second) {
      throw InputError(c.opt.input, jl.line, "duplicate id '" + id + "'");
    }
    rows.push_back({id, detail::string_field(jl.value, "response", c.opt.input,
                                             jl.line, true)});
  }
  std::vector<std::string> unmatched;
  for (const auto& r : rows) {
    if (!gold.count(r.id)) unmatched.push_back(r.id + " (no gold)");
  }
  for (const auto& [id, _] : gold) {
    if (!seen.count(id)) unmatched.push_back(id + " (no response)");
  }
  if (!unmatched.empty()) {
    c.err << "unmatched ids:\n";
    for (const auto& u : unmatched) c.err << "  " << u << "\n";
    return kExitUsage;
  }

  std::unique_ptr<JsonlWriter> writer;
  if (!c.opt.output.empty()) writer = std::make_unique<JsonlWriter>(c.opt.output);
  std::map<std::string, size_t> totals;
  double sum = 0.0;
  c.out << "id\tformat\taccuracy\tunit\ttotal\n";
  for (const auto& r : rows) {
    RewardBreakdown b = compute_reward(r.response, gold[r.id], rc, cues);
    const std::string total = fmt_double(b.total(), 1);
    ++totals[total];
    sum += b.total();
    c.out << r.id << '\t' << fmt_double(b.format, 1) << '\t'
          << fmt_double(b.accuracy, 1) << '\t' << fmt_double(b.unit, 1) << '\t'
          << total << '\n';
    if (writer) {
      writer->write({{"id", r.id},
                     {"format", b.format},
                     {"accuracy", b.accuracy},
                     {"unit", b.unit},
                     {"total", b.total()},
                     {"format_ok", b.format_ok},
                     {"accuracy_ok", b.accuracy_ok},
                     {"unit_ok", b.unit_ok}});
    }
  }
  c.out << "totals histogram\n";
  for (const auto& [t, n] : totals) c.out << "  " << t << "\t" << n << "\n";
  c.out << "mean reward "
        << (rows.empty() ? std::string("n/a")
                         : fmt_double(sum / static_cast<double>(rows.size()), 4))
        << " over " << rows.size() << " responses\n";
  return kExitOk;
}

inline SessionConfig session_from_flags(const Context& c, SessionConfig s) {
  if (c.opt.max_turns != 0) s.max_turns = c.opt.max_turns;
  if (!c.opt.halt_policy.empty()) {
    try {
      s.halt_policy = parse_halt_policy(c.opt.halt_policy);
    } catch (const ValidationError& e) {
      throw UsageError(e.what());
    }
  }
  if (c.opt.seed) s.seed = c.opt.seed;
  try {
    s.validate();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  return s;
}

inline int cmd_bench(const Context& c) {
  if (!backend_configured(c)) throw UsageError("bench needs --backend-config");
  AppConfig cfg = app_config(c);
  SessionConfig session = session_from_flags(c, cfg.session);
  if (session.halt_policy == HaltPolicy::kManual) {
    throw UsageError("bench cannot use the manual halt policy");
  }
  if (c.opt.repeat < 1) throw UsageError("--repeat must be >= 1");
  auto records = load_bench_records(c.opt.input);
  OpenAiClient backend(cfg.backend);
  BenchReport report = run_bench(records, backend, session, c.opt.workers, c.opt.repeat);
  print_bench_table(c.out, report);
  if (!c.opt.output.empty()) write_json_file(c.opt.output, to_json(report));
  return records.empty() || report.failed < report.records ? kExitOk : kExitFailure;
}

inline std::atomic<bool>& stop_requested() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline int cmd_serve(const Context& c) {
  AppConfig cfg = app_config(c);
  if (!c.opt.host.empty()) cfg.gateway.host = c.opt.host;
  if (c.opt.port >= 0) cfg.gateway.port = c.opt.port;
  SessionConfig session = session_from_flags(c, cfg.session);
  OpenAiClient backend(cfg.backend);
  Gateway gateway(backend, cfg.gateway, session);
  stop_requested() = false;
  std::signal(SIGINT, [](int) { stop_requested() = true; });
  std::signal(SIGTERM, [](int) { stop_requested() = true; });
  int port = gateway.start();
  c.out << "listening on http://" << cfg.gateway.host << ":" << port
        << " (backend " << cfg.backend.base_url << ")" << std::endl;
  while (!stop_requested()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
  gateway.stop();
  return kExitOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out,
               std::ostream& err, EnvLookup env = process_env) {
  CLI::App app{"Turn-wise reasoning toolkit: data pipeline, rewards, "
               "benchmarks and a session gateway."};
  app.require_subcommand(1);
  Options opt;

  auto add_input = [&](CLI::App* sub, bool required = true) {
    auto* o = sub->add_option("--input,-i", opt.input, "Input JSONL file");
    if (required) o->required();
    o->check(CLI::ExistingFile);
  };
  auto add_backend = [&](CLI::App* sub) {
    sub->add_option("--backend-config", opt.backend_config,
                    "JSON config with backend/session/gateway sections")
        ->check(CLI::ExistingFile);
  };
  auto add_segmentation = [&](CLI::App* sub) {
    sub->add_option("--lexicon", opt.lexicon, "Segmentation marker file")
        ->check(CLI::ExistingFile);
    sub->add_option("--mode", opt.mode, "Segmentation: rule or remote")
        ->check(CLI::IsMember({"rule", "remote"}));
    sub->add_option("--prompt-template", opt.prompt_template,
                    "Decomposition prompt with {question} and {prediction}")
        ->check(CLI::ExistingFile);
  };
  auto add_workers = [&](CLI::App* sub) {
    sub->add_option("--workers", opt.workers, "Parallel workers")
        ->check(CLI::PositiveNumber);
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", opt.seed, "Sampling seed passed to the backend");
  };

  auto* segment = app.add_subcommand("segment", "Split think text into units");
  add_input(segment);
  segment->add_option("--output,-o", opt.output, "Output JSONL")->required();
  add_backend(segment);
  add_segmentation(segment);
  add_workers(segment);

  auto* build = app.add_subcommand("build-data", "Build multi-turn SFT data");
  add_input(build);
  build->add_option("--output,-o", opt.output, "SFT JSONL output")->required();
  build->add_option("--report", opt.report, "Pipeline report JSON output");
  add_backend(build);
  add_segmentation(build);
  add_workers(build);
  add_seed(build);

  auto* analyze = app.add_subcommand("analyze-redundancy",
                                     "Redundancy rate and cue-word counts");
  add_input(analyze);
  analyze->add_option("--output,-o", opt.output, "Report JSON output");
  analyze->add_option("--cues", opt.cues, "Cue word file")->check(CLI::ExistingFile);
  add_backend(analyze);
  add_segmentation(analyze);
  add_workers(analyze);
  add_seed(analyze);

  auto* reward = app.add_subcommand("reward-eval", "Score responses");
  add_input(reward);
  reward->add_option("--gold", opt.gold, "Gold answers JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  reward->add_option("--reward-config", opt.reward_config, "Reward values JSON")
      ->check(CLI::ExistingFile);
  reward->add_option("--cues,--lexicon", opt.cues, "Cue word file")
      ->check(CLI::ExistingFile);
  reward->add_option("--output,-o", opt.output, "Per-response JSONL output");

  auto* bench = app.add_subcommand("bench", "Run sessions over a dataset");
  add_input(bench);
  add_backend(bench);
  bench->add_option("--output,-o", opt.output, "Report JSON output");
  bench->add_option("--max-turns", opt.max_turns, "Turn limit per session")
      ->check(CLI::PositiveNumber);
  bench->add_option("--halt-policy", opt.halt_policy, "fixed or consistency")
      ->check(CLI::IsMember({"fixed", "consistency", "manual"}));
  bench->add_option("--repeat", opt.repeat, "Sessions per record")
      ->check(CLI::PositiveNumber);
  add_workers(bench);
  add_seed(bench);

  auto* serve = app.add_subcommand("serve", "Run the session gateway");
  add_backend(serve);
  serve->add_option("--host", opt.host, "Bind address");
  serve->add_option("--port", opt.port, "Bind port (0 picks a free port)");
  serve->add_option("--max-turns", opt.max_turns, "Default turn limit")
      ->check(CLI::PositiveNumber);
  serve->add_option("--halt-policy", opt.halt_policy, "Default halt policy")
      ->check(CLI::IsMember({"fixed", "consistency", "manual"}));
  add_seed(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Context ctx{opt, out, err, std::move(env)};
  try {
    if (*segment) return cmd_segment(ctx);
    if (*build) return cmd_build_data(ctx);
    if (*analyze) return cmd_analyze_redundancy(ctx);
    if (*reward) return cmd_reward_eval(ctx);
    if (*bench) return cmd_bench(ctx);
    if (*serve) return cmd_serve(ctx);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace turnwise::cli
