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
#include <regex>
#include <thread>

#include "sse_client.hpp"
#include "turnwise/gateway.hpp"
#include "turnwise/testing/mock_backend.hpp"

namespace tw = turnwise;
using tw::testing::read_sse;
using tw::testing::ScriptedBackend;
using tw::testing::SseFrame;

namespace {

// Answers "Problem #N" with N-specific content so sessions can't be confused.
tw::testing::Responder per_problem(int turns) {
  return [turns](const std::string& ctx) {
    std::smatch m;
    static const std::regex re("Problem #([0-9]+)");
    if (!std::regex_search(ctx, m, re)) return std::string("\\boxed{?}");
    std::string n = m[1];
    std::vector<tw::testing::ScriptTurn> script;
    for (int k = 1; k <= turns; ++k) {
      script.push_back({"Case " + n + " step " + std::to_string(k) + ".",
                        "\\boxed{" + n + "}"});
    }
    return tw::testing::turn_script(script)(ctx);
  };
}

nlohmann::json post(int port, const std::string& path, const std::string& body,
                    int* status = nullptr) {
  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Post(path, body, "application/json");
  EXPECT_TRUE(res) << httplib::to_string(res.error());
  if (!res) return {};
  if (status) *status = res->status;
  return nlohmann::json::parse(res->body, nullptr, false);
}

nlohmann::json get(int port, const std::string& path, int* status = nullptr) {
  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Get(path);
  EXPECT_TRUE(res) << httplib::to_string(res.error());
  if (!res) return {};
  if (status) *status = res->status;
  return nlohmann::json::parse(res->body, nullptr, false);
}

std::string create(int port, nlohmann::json body) {
  int status = 0;
  auto j = post(port, "/v1/sessions", body.dump(), &status);
  EXPECT_EQ(status, 201) << j.dump();
  return j.value("id", "");
}

struct Fixture {
  explicit Fixture(tw::testing::Responder r, tw::GatewayConfig c = {},
                   tw::SessionConfig d = {})
      : backend(std::move(r)), gateway(backend, with_port0(c), d) {
    port = gateway.start();
  }
  static tw::GatewayConfig with_port0(tw::GatewayConfig c) {
    c.port = 0;
    c.keepalive = std::chrono::milliseconds(200);
    return c;
  }
  ScriptedBackend backend;
  tw::Gateway gateway;
  int port = 0;
};

void expect_gapless(const std::vector<SseFrame>& frames, int64_t first = 0) {
  for (size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(frames[i].id, first + static_cast<int64_t>(i));
    EXPECT_EQ(frames[i].data["seq"], frames[i].id);
    EXPECT_EQ(frames[i].data["type"], frames[i].event);
  }
}

}  // namespace

TEST(Gateway, SseFrameFormat) {
  tw::SessionEvent e{3, "turn_started", {{"turn", 1}}};
  EXPECT_EQ(tw::format_sse(e, "ab"),
            "id: 3\nevent: turn_started\ndata: "
            "{\"data\":{\"turn\":1},\"seq\":3,\"session_id\":\"ab\",\"type\":\"turn_started\"}\n\n");
  EXPECT_EQ(tw::new_session_id().size(), 32u);
  EXPECT_NE(tw::new_session_id(), tw::new_session_id());
}

TEST(Gateway, StreamsASessionToCompletion) {
  Fixture f(per_problem(2));
  std::string id = create(f.port, {{"problem", "Problem #7"}});
  auto sse = read_sse(f.port, "/v1/sessions/" + id + "/events");
  EXPECT_EQ(sse.status, 200);
  ASSERT_FALSE(sse.frames.empty());
  expect_gapless(sse.frames);
  EXPECT_EQ(sse.frames.front().event, "session_started");
  EXPECT_EQ(sse.frames.back().event, "session_completed");
  std::map<int, std::string> think, answer;
  std::vector<std::string> order;
  for (const auto& fr : sse.frames) {
    EXPECT_EQ(fr.data["session_id"], id);
    const auto& d = fr.data["data"];
    if (fr.event == "think_delta") think[d["turn"]] += d["delta"].get<std::string>();
    if (fr.event == "answer_delta") answer[d["turn"]] += d["delta"].get<std::string>();
    if (fr.event != "think_delta" && fr.event != "answer_delta") order.push_back(fr.event);
    const auto& types = tw::event_types();
    EXPECT_NE(std::find(types.begin(), types.end(), fr.event), types.end());
  }
  EXPECT_EQ(order, (std::vector<std::string>{"session_started", "turn_started", "turn_completed",
                                             "turn_started", "turn_completed",
                                             "session_completed"}));
  EXPECT_EQ(think[1], "Case 7 step 1.");
  EXPECT_EQ(answer[2], "\\boxed{7}");
  const auto& done = sse.frames.back().data["data"];
  EXPECT_EQ(done["final_answer"], "\\boxed{7}");
  EXPECT_EQ(done["turn_count"], 2);
  EXPECT_EQ(done["end_reason"], "eos");
  EXPECT_TRUE(tw::check_format(done["transcript"].get<std::string>()));

  int status = 0;
  auto summary = get(f.port, "/v1/sessions/" + id, &status);
  EXPECT_EQ(status, 200);
  EXPECT_EQ(summary["status"], "completed");
  EXPECT_EQ(summary["answers"], (nlohmann::json{"\\boxed{7}", "\\boxed{7}"}));
  EXPECT_EQ(summary["event_count"], sse.frames.size());
  EXPECT_EQ(summary["transcript"], done["transcript"]);
}

TEST(Gateway, RequestValidation) {
  tw::GatewayConfig c;
  c.max_turns_limit = 8;
  Fixture f(per_problem(1), c);
  int status = 0;
  post(f.port, "/v1/sessions", "{not json", &status);
  EXPECT_EQ(status, 400);
  post(f.port, "/v1/sessions", R"({"problem": "x", "color": 1})", &status);
  EXPECT_EQ(status, 400);
  post(f.port, "/v1/sessions", R"({"problem": "  "})", &status);
  EXPECT_EQ(status, 400);
  post(f.port, "/v1/sessions", R"({"problem": "x", "config": {"max_turns": 0}})", &status);
  EXPECT_EQ(status, 400);
  post(f.port, "/v1/sessions", R"({"problem": "x", "config": {"max_turns": 9}})", &status);
  EXPECT_EQ(status, 400);
  post(f.port, "/v1/sessions", R"({"problem": "x", "config": {"bogus": 1}})", &status);
  EXPECT_EQ(status, 400);
  auto ok = post(f.port, "/v1/sessions",
                 R"({"problem": "x", "config": {"max_turns": 8, "halt_policy": "consistency"}})",
                 &status);
  EXPECT_EQ(status, 201);
  EXPECT_EQ(ok["config"]["max_turns"], 8);
  EXPECT_EQ(ok["config"]["halt_policy"], "consistency");
  get(f.port, "/v1/sessions/deadbeef", &status);
  EXPECT_EQ(status, 404);
  EXPECT_EQ(read_sse(f.port, "/v1/sessions/deadbeef/events").status, 404);
  post(f.port, "/v1/sessions/deadbeef/decision", R"({"action": "halt"})", &status);
  EXPECT_EQ(status, 404);
}

TEST(Gateway, CapacityLimit) {
  tw::GatewayConfig c;
  c.capacity = 1;
  Fixture f(per_problem(3), c);
  f.backend.set_token_delay(std::chrono::milliseconds(20));
  std::string first = create(f.port, {{"problem", "Problem #1"}});
  int status = 0;
  auto j = post(f.port, "/v1/sessions", R"({"problem": "Problem #2"})", &status);
  EXPECT_EQ(status, 429);
  EXPECT_TRUE(j.contains("error"));
  read_sse(f.port, "/v1/sessions/" + first + "/events");  // drain to completion
  create(f.port, {{"problem", "Problem #3"}});
}

TEST(Gateway, ManualDecisions) {
  tw::SessionConfig d;
  d.halt_policy = tw::HaltPolicy::kManual;
  Fixture f(per_problem(4), {}, d);
  std::string id = create(f.port, {{"problem", "Problem #4"}});
  const std::string dpath = "/v1/sessions/" + id + "/decision";
  int status = 0;
  post(f.port, dpath, R"({"action": "maybe"})", &status);
  EXPECT_EQ(status, 400);

  int awaits = 0;
  std::vector<int> replies;
  auto sse = read_sse(f.port, "/v1/sessions/" + id + "/events", {},
                      [&](const SseFrame& fr) {
                        if (fr.event == "awaiting_decision") {
                          ++awaits;
                          nlohmann::json body = {
                              {"action", awaits == 1 ? "continue" : "halt"},
                              {"turn", fr.data["data"]["turn"]}};
                          int s1 = 0, s2 = 0;
                          post(f.port, dpath, body.dump(), &s1);
                          post(f.port, dpath, body.dump(), &s2);  // retry
                          replies.push_back(s1);
                          replies.push_back(s2);
                        }
                        return true;
                      });
  EXPECT_EQ(awaits, 2);
  EXPECT_EQ(replies, (std::vector<int>{200, 409, 200, 409}));
  const auto& done = sse.frames.back();
  EXPECT_EQ(done.event, "session_completed");
  EXPECT_EQ(done.data["data"]["turn_count"], 2);
  EXPECT_EQ(done.data["data"]["end_reason"], "external");
  EXPECT_EQ(done.data["data"]["halt_origin"], "external");
  post(f.port, dpath, R"({"action": "continue"})", &status);
  EXPECT_EQ(status, 409);
}

TEST(Gateway, DecisionTimeoutHalts) {
  tw::SessionConfig d;
  d.halt_policy = tw::HaltPolicy::kManual;
  d.decision_timeout = std::chrono::milliseconds(100);
  Fixture f(per_problem(3), {}, d);
  std::string id = create(f.port, {{"problem", "Problem #5"}});
  auto sse = read_sse(f.port, "/v1/sessions/" + id + "/events");
  const auto& done = sse.frames.back().data["data"];
  EXPECT_EQ(done["end_reason"], "timeout");
  EXPECT_EQ(done["turn_count"], 1);
}

TEST(Gateway, ResumeAfterDisconnect) {
  Fixture f(per_problem(3));
  f.backend.set_token_delay(std::chrono::milliseconds(2));
  std::string id = create(f.port, {{"problem", "Problem #9"}});
  const std::string path = "/v1/sessions/" + id + "/events";
  auto part = read_sse(f.port, path, {}, [](const SseFrame& fr) { return fr.id < 4; });
  EXPECT_TRUE(part.hung_up);
  ASSERT_EQ(part.frames.size(), 5u);
  auto rest = read_sse(f.port, path, std::to_string(part.frames.back().id));
  auto full = read_sse(f.port, path);
  ASSERT_FALSE(rest.frames.empty());
  EXPECT_EQ(rest.frames.front().id, 5);
  std::vector<SseFrame> joined = part.frames;
  joined.insert(joined.end(), rest.frames.begin(), rest.frames.end());
  ASSERT_EQ(joined.size(), full.frames.size());
  for (size_t i = 0; i < joined.size(); ++i) EXPECT_EQ(joined[i].data, full.frames[i].data);
  auto by_query = read_sse(f.port, path + "?last_event_id=" +
                                       std::to_string(full.frames.size() - 2));
  ASSERT_EQ(by_query.frames.size(), 1u);
  EXPECT_EQ(by_query.frames[0].event, "session_completed");
}

TEST(Gateway, KeepAliveWhileIdle) {
  tw::SessionConfig d;
  d.halt_policy = tw::HaltPolicy::kManual;
  d.decision_timeout = std::chrono::milliseconds(700);
  Fixture f(per_problem(2), {}, d);
  std::string id = create(f.port, {{"problem", "Problem #1"}});
  auto sse = read_sse(f.port, "/v1/sessions/" + id + "/events");
  EXPECT_GE(sse.keepalives, 1);
  EXPECT_EQ(sse.frames.back().event, "session_completed");
}

TEST(Gateway, ConcurrentSessionsDoNotMix) {
  Fixture f(per_problem(3));
  const int n = 16;
  std::vector<std::string> ids(n);
  std::vector<tw::testing::SseResult> results(n);
  {
    std::vector<std::jthread> threads;
    for (int i = 0; i < n; ++i) {
      threads.emplace_back([&, i] {
        ids[i] = create(f.port, {{"problem", "Problem #" + std::to_string(100 + i)}});
        results[i] = read_sse(f.port, "/v1/sessions/" + ids[i] + "/events");
      });
    }
  }
  for (int i = 0; i < n; ++i) {
    const auto& frames = results[i].frames;
    expect_gapless(frames);
    ASSERT_FALSE(frames.empty());
    EXPECT_EQ(frames.back().event, "session_completed");
    const std::string mine = std::to_string(100 + i);
    std::map<int, std::string> think;
    for (const auto& fr : frames) {
      EXPECT_EQ(fr.data["session_id"], ids[i]);
      if (fr.event == "think_delta") {
        think[fr.data["data"]["turn"]] += fr.data["data"]["delta"].get<std::string>();
      }
    }
    ASSERT_EQ(think.size(), 3u);
    for (const auto& [k, t] : think) {
      EXPECT_EQ(t, "Case " + mine + " step " + std::to_string(k) + ".");
    }
    EXPECT_EQ(frames.back().data["data"]["final_answer"], "\\boxed{" + mine + "}");
  }
  auto health = get(f.port, "/healthz");
  EXPECT_EQ(health["status"], "ok");
  EXPECT_EQ(health["sessions"]["total"], n);
  EXPECT_EQ(health["sessions"]["live"], 0);
}

TEST(Gateway, FailedSessionEvent) {
  Fixture f(per_problem(2));
  f.backend.fail_when_context_contains("Problem #3", tw::BackendError::Kind::kHttpStatus);
  std::string id = create(f.port, {{"problem", "Problem #3"}});
  auto sse = read_sse(f.port, "/v1/sessions/" + id + "/events");
  EXPECT_EQ(sse.frames.back().event, "session_failed");
  EXPECT_NE(sse.frames.back().data["data"]["error"].get<std::string>().find("http_status"),
            std::string::npos);
  EXPECT_EQ(get(f.port, "/v1/sessions/" + id)["status"], "failed");
}

TEST(Gateway, WritesTranscriptLog) {
  auto dir = std::filesystem::temp_directory_path() / "turnwise_gateway_logs";
  std::filesystem::remove_all(dir);
  tw::GatewayConfig c;
  c.transcript_dir = dir.string();
  Fixture f(per_problem(1), c);
  std::string id = create(f.port, {{"problem", "Problem #2"}});
  auto sse = read_sse(f.port, "/v1/sessions/" + id + "/events");
  std::ifstream in(dir / (id + ".jsonl"));
  ASSERT_TRUE(in);
  size_t lines = 0;
  for (std::string line; std::getline(in, line);) {
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["seq"], lines);
    ++lines;
  }
  EXPECT_EQ(lines, sse.frames.size());
  std::filesystem::remove_all(dir);
}
