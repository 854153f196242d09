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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "turnwise/bench.hpp"
#include "turnwise/config.hpp"
#include "turnwise/controller.hpp"
#include "turnwise/pipeline.hpp"
#include "turnwise/records.hpp"
#include "turnwise/reward.hpp"
#include "turnwise/testing/mock_backend.hpp"

namespace tw = turnwise;
using tw::testing::ScriptedBackend;
using tw::testing::ScriptTurn;
using Action = tw::HaltDecision::Action;
using Origin = tw::HaltDecision::Origin;

namespace {

std::vector<ScriptTurn> script(std::vector<std::string> answers) {
  std::vector<ScriptTurn> turns;
  for (size_t i = 0; i < answers.size(); ++i) {
    turns.push_back({(i == 0 ? "Let me work it out." : " Wait, check again.") +
                         std::string(" Step ") + std::to_string(i + 1) + ".",
                     "So \\boxed{" + answers[i] + "}"});
  }
  return turns;
}

tw::Query query(std::string problem = "What is 6*7?") {
  return tw::Query("q1", std::move(problem), std::string("42"));
}

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
  auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

struct Recorder : tw::SessionObserver {
  std::vector<std::string> log;
  std::map<int, std::string> think, answer;
  void on_turn_started(int t) override { log.push_back("start " + std::to_string(t)); }
  void on_think_delta(int t, const std::string& d) override { think[t] += d; }
  void on_answer_delta(int t, const std::string& d) override { answer[t] += d; }
  void on_turn_completed(const tw::TurnRecord& r, const tw::SessionState&) override {
    log.push_back("done " + std::to_string(r.turn.unit.index));
  }
  void on_awaiting_decision(const tw::SessionState&) override { log.push_back("await"); }
  void on_decision(const tw::HaltDecision& d) override {
    log.push_back(std::string("decision ") + tw::to_string(d.action));
  }
};

}  // namespace

// ---------------------------------------------------------------- controller

TEST(Controller, RunsScriptToEndOfSequence) {
  auto turns = script({"40", "41", "42"});
  ScriptedBackend backend(tw::testing::turn_script(turns));
  Recorder rec;
  auto r = tw::run_session(query(), tw::SessionConfig{}, backend, &rec);
  ASSERT_EQ(r.status, tw::SessionStatus::kCompleted) << r.error;
  EXPECT_EQ(r.end_reason, "eos");
  ASSERT_EQ(r.turns.size(), 3u);
  EXPECT_EQ(r.transcript, tw::testing::render_script(turns));
  ASSERT_TRUE(r.response);
  EXPECT_EQ(tw::render_multi_turn(*r.response), r.transcript);
  EXPECT_EQ(r.response->final_answer(), "So \\boxed{42}");
  EXPECT_TRUE(tw::check_format(r.transcript));
  EXPECT_EQ(backend.calls(), 6);
  for (int k = 1; k <= 3; ++k) {
    EXPECT_EQ(rec.think[k], turns[k - 1].think);
    EXPECT_EQ(rec.answer[k], turns[k - 1].answer);
  }
  EXPECT_EQ(rec.log.front(), "start 1");
  EXPECT_EQ(rec.log.back(), "done 3");
}

TEST(Controller, TokenAccountingMatchesTokenizer) {
  auto turns = script({"1", "2"});
  ScriptedBackend backend(tw::testing::turn_script(turns));
  auto r = tw::run_session(query(), tw::SessionConfig{}, backend);
  ASSERT_EQ(r.turns.size(), 2u);
  int64_t expected_output = 0;
  for (size_t i = 0; i < 2; ++i) {
    int64_t think = tw::testing::count_tokens(turns[i].think);
    int64_t answer = tw::testing::count_tokens(turns[i].answer);
    EXPECT_EQ(r.turns[i].think_tokens, think);
    EXPECT_EQ(r.turns[i].answer_tokens, answer);
    EXPECT_EQ(r.turns[i].stats.output_tokens, think + answer);
    expected_output += think + answer;
  }
  EXPECT_EQ(r.stats.output_tokens, expected_output);
  EXPECT_EQ(r.turns[0].stats.prompt_tokens,
            tw::testing::count_tokens(tw::prompts::render_qa("What is 6*7?") + "<think>"));
  EXPECT_FALSE(r.stats.estimated);
  EXPECT_TRUE(r.stats.valid());
  EXPECT_TRUE(r.has_ttft);
  EXPECT_LE(r.stats.ttft_ms, r.stats.total_ms);
}

TEST(Controller, RequestsCarryTagStops) {
  ScriptedBackend backend(tw::testing::turn_script(script({"1"})));
  tw::SessionConfig c;
  c.think_budget = 77;
  c.answer_max_tokens = 33;
  tw::run_session(query(), c, backend);
  auto reqs = backend.requests();
  ASSERT_EQ(reqs.size(), 2u);
  EXPECT_EQ(reqs[0].stop, std::vector<std::string>{"</think>"});
  EXPECT_EQ(reqs[0].max_tokens, 77);
  EXPECT_TRUE(reqs[0].context.ends_with("<think>"));
  EXPECT_EQ(reqs[1].stop, std::vector<std::string>{"<think>"});
  EXPECT_EQ(reqs[1].max_tokens, 33);
}

TEST(Controller, MaxTurnsStopsTheSession) {
  ScriptedBackend backend(tw::testing::turn_script(script({"1", "2", "3", "4"})));
  tw::SessionConfig c;
  c.max_turns = 2;
  auto r = tw::run_session(query(), c, backend);
  EXPECT_EQ(r.status, tw::SessionStatus::kCompleted);
  EXPECT_EQ(r.turns.size(), 2u);
  EXPECT_EQ(r.end_reason, "max_turns");
}

TEST(Controller, ConsistencyHaltsEarlyAndSavesTokens) {
  auto turns = script({"42", "42", "42", "42"});
  ScriptedBackend b1(tw::testing::turn_script(turns));
  ScriptedBackend b2(tw::testing::turn_script(turns));
  tw::SessionConfig fixed;
  tw::SessionConfig consistent;
  consistent.halt_policy = tw::HaltPolicy::kConsistency;
  consistent.consistency_window = 2;
  auto full = tw::run_session(query(), fixed, b1);
  auto early = tw::run_session(query(), consistent, b2);
  EXPECT_EQ(full.turns.size(), 4u);
  EXPECT_EQ(early.turns.size(), 2u);
  EXPECT_EQ(early.end_reason, "consistency");
  EXPECT_LT(early.stats.output_tokens, full.stats.output_tokens);
}

TEST(Controller, ConsistencyNeedsAgreeingTail) {
  ScriptedBackend backend(tw::testing::turn_script(script({"1", "2", "0.5", "1/2", "9"})));
  tw::SessionConfig c;
  c.halt_policy = tw::HaltPolicy::kConsistency;
  auto r = tw::run_session(query(), c, backend);
  EXPECT_EQ(r.turns.size(), 4u);  // 0.5 and 1/2 agree after normalization
  EXPECT_EQ(r.end_reason, "consistency");
}

TEST(Controller, ForcedCloseWhenThinkBudgetRunsOut) {
  std::vector<ScriptTurn> turns = {{"a b c d e f g", "\\boxed{1}"}};
  ScriptedBackend backend(tw::testing::turn_script(turns));
  tw::SessionConfig c;
  c.think_budget = 3;
  auto r = tw::run_session(query(), c, backend);
  ASSERT_EQ(r.status, tw::SessionStatus::kCompleted) << r.error;
  ASSERT_EQ(r.turns.size(), 1u);
  EXPECT_TRUE(r.turns[0].forced_close);
  EXPECT_EQ(r.turns[0].turn.unit.text, "a b c");
  EXPECT_EQ(r.turns[0].think_tokens, 3);
  EXPECT_EQ(r.turns[0].turn.answer, "\\boxed{1}");
  // The forced tag is context: the answer request sees it, output does not.
  auto reqs = backend.requests();
  EXPECT_TRUE(reqs.back().context.ends_with("<think>a b c</think>"));
  EXPECT_EQ(r.turns[0].answer_tokens, tw::testing::count_tokens("\\boxed{1}"));
}

TEST(Controller, StreamingAndPlainAgree) {
  auto turns = script({"5", "6"});
  ScriptedBackend b1(tw::testing::turn_script(turns));
  ScriptedBackend b2(tw::testing::turn_script(turns));
  tw::SessionConfig s, p;
  p.stream = false;
  auto a = tw::run_session(query(), s, b1);
  auto b = tw::run_session(query(), p, b2);
  EXPECT_EQ(a.transcript, b.transcript);
  EXPECT_EQ(a.stats.output_tokens, b.stats.output_tokens);
  EXPECT_TRUE(b.has_ttft);
}

TEST(Controller, ManualDecisions) {
  auto turns = script({"1", "2", "3", "4"});
  ScriptedBackend backend(tw::testing::turn_script(turns));
  tw::SessionConfig c;
  c.halt_policy = tw::HaltPolicy::kManual;
  std::vector<std::optional<Action>> answers = {Action::kContinue, Action::kHalt};
  size_t next = 0;
  Recorder rec;
  auto r = tw::run_session(query(), c, backend, &rec,
                           [&](std::chrono::milliseconds) { return answers[next++]; });
  EXPECT_EQ(r.turns.size(), 2u);
  EXPECT_EQ(r.end_reason, "external");
  ASSERT_TRUE(r.last_decision);
  EXPECT_EQ(r.last_decision->origin, Origin::kExternal);
  EXPECT_EQ(std::count(rec.log.begin(), rec.log.end(), "await"), 2);

  ScriptedBackend b2(tw::testing::turn_script(turns));
  auto silent = tw::run_session(query(), c, b2, nullptr,
                                [](std::chrono::milliseconds) { return std::nullopt; });
  EXPECT_EQ(silent.turns.size(), 1u);
  EXPECT_EQ(silent.end_reason, "timeout");
  EXPECT_EQ(silent.status, tw::SessionStatus::kCompleted);
}

TEST(Controller, BackendFailureFailsTheSession) {
  ScriptedBackend backend(tw::testing::turn_script(script({"1", "2"})));
  backend.fail_when_context_contains("Step 1.</think>So \\boxed{1}<think>",
                                     tw::BackendError::Kind::kConnection);
  auto r = tw::run_session(query(), tw::SessionConfig{}, backend);
  EXPECT_EQ(r.status, tw::SessionStatus::kFailed);
  EXPECT_NE(r.error.find("connection"), std::string::npos);
  EXPECT_EQ(r.turns.size(), 1u);  // the completed turn survives
}

TEST(Controller, EmptyModelOutputIsAFailure) {
  ScriptedBackend backend([](const std::string&) { return std::string(); });
  auto r = tw::run_session(query(), tw::SessionConfig{}, backend);
  EXPECT_EQ(r.status, tw::SessionStatus::kFailed);
  EXPECT_FALSE(r.response.has_value());
  EXPECT_FALSE(r.has_ttft);
  EXPECT_LE(r.stats.ttft_ms, r.stats.total_ms);
}

TEST(Controller, ConfigValidation) {
  tw::SessionConfig c;
  c.max_turns = 0;
  EXPECT_THROW(c.validate(), tw::ValidationError);
  c = {};
  c.consistency_window = 1;
  EXPECT_THROW(c.validate(), tw::ValidationError);
  EXPECT_EQ(tw::parse_halt_policy("consistency"), tw::HaltPolicy::kConsistency);
  EXPECT_THROW(tw::parse_halt_policy("never"), tw::ValidationError);
}

// ---------------------------------------------------------------- pipeline

namespace {

std::vector<tw::PrefixProbeResult> probes(std::vector<int> correct) {
  std::vector<tw::PrefixProbeResult> out;
  for (size_t i = 0; i < correct.size(); ++i) {
    tw::PrefixProbeResult p;
    p.k = static_cast<int>(i) + 1;
    p.answer = "x";
    p.correct = correct[i] == 1;
    p.indeterminate = correct[i] < 0;
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST(Redundancy, UrrExamples) {
  auto r = tw::compute_urr(probes({0, 1, 1, 1}), true);
  EXPECT_EQ(r.n, 4);
  EXPECT_EQ(r.n_star, 2);
  EXPECT_EQ(r.urr, 2.0 / 4.0);
  EXPECT_EQ(tw::compute_urr(probes({0, 1, 0, 1}), true).n_star, 2);
  EXPECT_EQ(tw::compute_urr(probes({1, 1, 0}), false).urr, 0.0);
  EXPECT_EQ(tw::compute_urr(probes({1}), true).urr, 0.0);
  EXPECT_EQ(tw::compute_urr(probes({-1, 0, 1}), true).n_star, 3);
  EXPECT_THROW(tw::compute_urr({}, true), tw::PipelineError);
  auto shuffled = probes({1, 1});
  std::swap(shuffled[0], shuffled[1]);
  EXPECT_THROW(tw::compute_urr(shuffled, true), tw::PipelineError);
}

TEST(Redundancy, Aggregate) {
  auto s = tw::aggregate_redundancy({tw::compute_urr(probes({0, 1, 1, 1}), true),
                                     tw::compute_urr(probes({1, 1}), true)});
  EXPECT_EQ(s.count, 2u);
  EXPECT_EQ(*s.mean_urr, (0.5 + 0.5) / 2);
  EXPECT_EQ(s.n_histogram, (std::map<int, size_t>{{2, 1}, {4, 1}}));
  EXPECT_EQ(s.n_star_histogram, (std::map<int, size_t>{{1, 1}, {2, 1}}));
  EXPECT_FALSE(tw::aggregate_redundancy({}).mean_urr.has_value());
}

TEST(Pipeline, CueFrequencyCountsWholeWords) {
  auto f = tw::cue_frequency({"Wait, wait. Wait", "Awaiting. Wait!"}, {"Wait", "check"});
  EXPECT_EQ(f, (std::vector<std::pair<std::string, size_t>>{{"Wait", 3}, {"check", 0}}));
}

TEST(Pipeline, RejectionFilter) {
  std::vector<tw::RawTraceRecord> recs = {
      {tw::Query("a", "p", std::string("4")), "t", "\\boxed{4}"},
      {tw::Query("b", "p", std::string("4")), "t", "\\boxed{5}"}};
  auto kept = tw::rejection_filter(recs);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].query.id, "a");
  recs.push_back({tw::Query("c", "p", std::nullopt), "t", "4"});
  try {
    tw::rejection_filter(recs);
    FAIL();
  } catch (const tw::PipelineError& e) {
    EXPECT_EQ(e.kind(), tw::PipelineError::Kind::kMissingGold);
  }
}

TEST(Pipeline, ProbeRequestsCloseAfterEachPrefix) {
  std::vector<tw::ThinkingUnit> units = {{1, "A. "}, {2, "Wait, B. "}, {3, "So C."}};
  ScriptedBackend backend([](const std::string&) { return std::string("\\boxed{4}"); });
  auto q = tw::Query("q", "2+2", std::string("4"));
  auto res = tw::complete_intermediate_answers(q, units, backend);
  ASSERT_EQ(res.size(), 3u);
  auto reqs = backend.requests();
  const std::string head = tw::prompts::render_qa("2+2") + "<think>";
  EXPECT_EQ(reqs[0].context, head + "A. </think>");
  EXPECT_EQ(reqs[1].context, head + "A. Wait, B. </think>");
  EXPECT_EQ(reqs[2].context, head + "A. Wait, B. So C.</think>");
  for (const auto& r : reqs) EXPECT_EQ(r.stop, std::vector<std::string>{"<think>"});
  for (const auto& r : res) EXPECT_TRUE(r.correct);
}

TEST(Pipeline, EndToEndWithProbeScript) {
  using tw::testing::ProbeCase;
  // think texts segment into the listed units under the default lexicon.
  std::vector<ProbeCase> cases = {
      {"P1", {"x is 3. ", "Wait, x is 3. ", "Alternatively, 3."}, {"\\boxed{2}", "\\boxed{3}", "\\boxed{3}"}},
      {"P2", {"y is 5."}, {"\\boxed{5}"}},
      {"P3", {"z is 1. ", "Hmm, z is 2."}, {"\\boxed{2}", "\\boxed{2}"}},
  };
  auto join = [](const ProbeCase& c) {
    std::string s;
    for (const auto& u : c.units) s += u;
    return s;
  };
  std::vector<tw::RawTraceRecord> recs = {
      {tw::Query("r1", "P1", std::string("3")), join(cases[0]), "\\boxed{3}"},
      {tw::Query("r2", "P2", std::string("5")), join(cases[1]), "\\boxed{5}"},
      {tw::Query("r3", "P3", std::string("2")), join(cases[2]), "\\boxed{2}"},
      {tw::Query("r4", "P4", std::string("7")), "t", "\\boxed{8}"},
      {tw::Query("r5", "P5", std::nullopt), "t", "\\boxed{8}"},
  };
  ScriptedBackend backend(tw::testing::prefix_probe(cases, "fallback"));
  tw::PipelineOptions opt;
  opt.workers = 3;
  auto res = tw::run_pipeline(recs, &backend, opt);
  EXPECT_EQ(res.input_count, 5u);
  EXPECT_EQ(res.missing_gold, 1u);
  EXPECT_EQ(res.rejected, 1u);
  EXPECT_EQ(res.kept, 3u);
  EXPECT_EQ(res.probe_calls, 3u + 1u + 2u);
  EXPECT_EQ(backend.calls(), 6);
  ASSERT_EQ(res.sft_examples.size(), 3u);
  for (const auto& e : res.sft_examples) EXPECT_TRUE(tw::check_format(e.target));
  EXPECT_EQ(res.sft_examples[0].target,
            "<think>x is 3. </think>\\boxed{2}<think>Wait, x is 3. </think>\\boxed{3}"
            "<think>Alternatively, 3.</think>\\boxed{3}");
  EXPECT_EQ(res.sft_examples[0].prompt, tw::prompts::render_qa("P1"));
  // n* = 2 of 3, 1 of 1, 1 of 2.
  ASSERT_TRUE(res.redundancy.mean_urr);
  EXPECT_EQ(*res.redundancy.mean_urr, (1.0 / 3.0 + 0.0 + 1.0 / 2.0) / 3.0);
  EXPECT_EQ(res.failed, 0u);
}

TEST(Pipeline, IndeterminateProbeDropsRecord) {
  std::vector<tw::RawTraceRecord> recs = {
      {tw::Query("r1", "P1", std::string("3")), "a. Wait, b.", "\\boxed{3}"}};
  ScriptedBackend backend([](const std::string&) { return std::string("\\boxed{3}"); });
  backend.fail_when_context_contains("Wait, b.</think>");
  auto res = tw::run_pipeline(recs, &backend);
  EXPECT_EQ(res.kept, 1u);
  EXPECT_EQ(res.failed, 1u);
  EXPECT_TRUE(res.sft_examples.empty());
  EXPECT_EQ(res.redundancy.count, 0u);
  ASSERT_EQ(res.outcomes[0].probes.size(), 2u);
  EXPECT_TRUE(res.outcomes[0].probes[1].indeterminate);
  EXPECT_NE(res.outcomes[0].probes[1].error.find("timeout"), std::string::npos);
  EXPECT_THROW(tw::build_sft_example(recs[0].query, res.outcomes[0].segmentation->units,
                                     res.outcomes[0].probes),
               tw::PipelineError);
}

TEST(Pipeline, RemoteSegmentation) {
  const std::string think = "First idea. Second idea. Third.";
  ScriptedBackend backend([](const std::string&) {
    return std::string("First idea.[split] Second idea.\n[split]Third.");
  });
  auto r = tw::segment_remote(think, "Q", backend);
  EXPECT_EQ(r.method, tw::SegmentationMethod::kRemote);
  ASSERT_EQ(r.units.size(), 3u);
  EXPECT_EQ(r.units[0].text + r.units[1].text + r.units[2].text, think);
  EXPECT_EQ(r.boundaries[1], think.find("Second"));  // whitespace trails the unit
  EXPECT_NE(backend.requests()[0].context.find("Solution:\n" + think), std::string::npos);

  ScriptedBackend liar([](const std::string&) { return std::string("Totally[split]different"); });
  auto f = tw::segment_remote("A. Wait, B.", "Q", liar);
  EXPECT_TRUE(f.fallback);
  EXPECT_EQ(f.method, tw::SegmentationMethod::kRule);
  EXPECT_EQ(f.units.size(), 2u);
}

// ---------------------------------------------------------------- records

TEST(Records, TraceFieldsSplitFullResponse) {
  auto j = nlohmann::json::parse(
      R"({"id": 7, "problem": "p", "answer": "4", "response": "<think>t1 t2</think> \\boxed{4}"})");
  auto f = tw::trace_fields(j, "mem", 1);
  EXPECT_EQ(f.id, "7");
  EXPECT_EQ(f.think, "t1 t2");
  EXPECT_EQ(f.response, " \\boxed{4}");
  EXPECT_EQ(*f.gold, "4");
}

TEST(Records, ReadJsonlReportsLineNumbers) {
  auto p = temp_file("turnwise_bad.jsonl", "{\"id\": \"a\"}\n\n[1]\n");
  try {
    tw::read_jsonl(p.string());
    FAIL();
  } catch (const tw::InputError& e) {
    EXPECT_EQ(e.line(), 3);
  }
  auto q = temp_file("turnwise_missing.jsonl", "{\"id\": \"a\", \"think\": \"t\"}\n");
  EXPECT_THROW(tw::load_trace_records(q.string()), tw::InputError);
  std::filesystem::remove(p);
  std::filesystem::remove(q);
}

// ---------------------------------------------------------------- bench

TEST(Bench, DeterministicAndScored) {
  std::vector<tw::BenchRecord> recs = {{"a", "What is 6*7?", "42"},
                                       {"b", "What is 1+1?", "3"}};
  auto turns = script({"41", "42"});
  tw::SessionConfig c;
  c.seed = 1;
  ScriptedBackend b1(tw::testing::turn_script(turns));
  ScriptedBackend b2(tw::testing::turn_script(turns));
  auto r1 = tw::run_bench(recs, b1, c, 2, 2);
  auto r2 = tw::run_bench(recs, b2, c, 1, 2);
  EXPECT_EQ(tw::to_json(r1, false), tw::to_json(r2, false));
  EXPECT_EQ(r1.records, 4u);
  EXPECT_EQ(r1.accuracy, 0.5);
  EXPECT_EQ(r1.turn_histogram, (std::map<int, size_t>{{2, 4}}));
  int64_t per_session = 0;
  for (const auto& t : turns) {
    per_session += tw::testing::count_tokens(t.think) + tw::testing::count_tokens(t.answer);
  }
  EXPECT_EQ(*r1.mean_output_tokens, static_cast<double>(per_session));
  EXPECT_EQ(tw::bench_report_from_json(tw::to_json(r1)), r1);
}

TEST(Bench, FailedSessionsExcludedFromMeans) {
  std::vector<tw::BenchRecord> recs = {{"a", "ok problem", "42"}, {"b", "bad problem", "42"}};
  ScriptedBackend backend(tw::testing::turn_script(script({"42"})));
  backend.fail_when_context_contains("bad problem");
  auto r = tw::run_bench(recs, backend, tw::SessionConfig{});
  EXPECT_EQ(r.failed, 1u);
  EXPECT_EQ(r.accuracy, 0.5);
  EXPECT_TRUE(r.rows[1].failed);
  EXPECT_EQ(*r.mean_output_tokens, static_cast<double>(r.rows[0].output_tokens));
}

// ---------------------------------------------------------------- config

TEST(Config, FileThenEnvironmentPrecedence) {
  auto p = temp_file("turnwise_cfg.json", R"({
    "backend": {"base_url": "http://file:1/v1", "max_retries": 5},
    "session": {"max_turns": 3, "halt_policy": "consistency"},
    "gateway": {"port": 9000},
    "reward": {"unit_fail": -0.5}
  })");
  std::map<std::string, std::string> env = {{"TURNWISE_BACKEND_URL", "http://env:2/v1"},
                                            {"TURNWISE_MAX_TURNS", "5"}};
  auto lookup = [&](const char* name) -> std::optional<std::string> {
    auto it = env.find(name);
    return it == env.end() ? std::nullopt : std::optional(it->second);
  };
  auto c = tw::load_app_config(p.string(), lookup);
  EXPECT_EQ(c.backend.base_url, "http://env:2/v1");
  EXPECT_EQ(c.backend.max_retries, 5);
  EXPECT_EQ(c.session.max_turns, 5);
  EXPECT_EQ(c.session.halt_policy, tw::HaltPolicy::kConsistency);
  EXPECT_EQ(c.gateway.port, 9000);
  EXPECT_EQ(c.reward.unit_fail, -0.5);
  EXPECT_EQ(c.backend.model, "default");

  env["TURNWISE_MAX_TURNS"] = "zero";
  EXPECT_THROW(tw::load_app_config(p.string(), lookup), tw::ConfigError);
  std::filesystem::remove(p);
}

TEST(Config, UnknownKeysAreRejected) {
  auto p = temp_file("turnwise_cfg2.json", R"({"session": {"max_turn": 3}})");
  auto none = [](const char*) -> std::optional<std::string> { return std::nullopt; };
  EXPECT_THROW(tw::load_app_config(p.string(), none), tw::ConfigError);
  std::filesystem::remove(p);
  auto defaults = tw::load_app_config(std::nullopt, none);
  EXPECT_EQ(defaults.session.max_turns, 16);
}
