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
 * HTTP session service.
 *
 *   POST /v1/sessions                 {"problem", "id"?, "config"?} -> 201
 *   GET  /v1/sessions/{id}            status snapshot
 *   GET  /v1/sessions/{id}/events     server-sent events, resumable
 *   POST /v1/sessions/{id}/decision   {"action": "continue" | "halt"}
 *   GET  /healthz                     service and backend reachability
 *
 * Every session runs its controller on a dedicated thread and appends events
 * to a per-session log. Event sequence numbers start at 0 and have no gaps;
 * a subscriber gets the log replayed from 0 (or from after Last-Event-ID)
 * followed by live events, and the stream ends once the session is terminal
 * and fully delivered. Terminal sessions stay readable for `event_ttl`.
 */

#include "turnwise/http.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "turnwise/config.hpp"
#include "turnwise/controller.hpp"

namespace turnwise {

inline const std::vector<std::string>& event_types() {
  static const std::vector<std::string> types = {
      "session_started",   "turn_started",     "think_delta",
      "answer_delta",      "turn_completed",   "awaiting_decision",
      "session_completed", "session_failed"};
  return types;
}

struct SessionEvent {
  int64_t seq = 0;
  std::string type;
  nlohmann::json data;
};

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// 128 random bits, hex encoded.
inline std::string new_session_id() {
  static thread_local std::mt19937_64 rng = [] {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd(), rd(), rd(), rd(), rd()};
    return std::mt19937_64(seq);
  }();
  static const char* hex = "0123456789abcdef";
  std::string id;
  for (int word = 0; word < 2; ++word) {
    uint64_t v = rng();
    for (int i = 0; i < 16; ++i) {
      id.push_back(hex[v & 0xf]);
      v >>= 4;
    }
  }
  return id;
}

inline nlohmann::json stats_json(const TokenStats& s) {
  return {{"prompt_tokens", s.prompt_tokens},
          {"output_tokens", s.output_tokens},
          {"ttft_ms", s.ttft_ms},
          {"total_ms", s.total_ms},
          {"estimated", s.estimated}};
}

class GatewaySession : public SessionObserver {
 public:
  GatewaySession(std::string id, Query query, SessionConfig config,
                 std::string transcript_path)
      : id_(std::move(id)), created_at_(utc_timestamp()),
        query_(std::move(query)), config_(std::move(config)),
        transcript_path_(std::move(transcript_path)) {}

  ~GatewaySession() override { join(); }

  const std::string& id() const { return id_; }
  const std::string& created_at() const { return created_at_; }
  const SessionConfig& config() const { return config_; }

  void start(Backend& backend) {
    push("session_started",
         {{"problem", query_.problem}, {"config", to_json(config_)}});
    worker_ = std::thread([this, &backend] { run(backend); });
  }

  void join() {
    shutdown();
    if (worker_.joinable()) worker_.join();
  }

  // Wakes a pending decision wait so the session halts promptly.
  void shutdown() {
    std::lock_guard lock(mu_);
    shutting_down_ = true;
    cv_.notify_all();
  }

  enum class DecisionOutcome { kAccepted, kNotAwaiting };

  // With `turn` set, the decision only applies to the pause after that turn,
  // so a retried request cannot leak into a later pause.
  DecisionOutcome post_decision(HaltDecision::Action action,
                                std::optional<int> turn = std::nullopt) {
    std::lock_guard lock(mu_);
    if (status_ != SessionStatus::kAwaitingDecision || pending_decision_ ||
        (turn && *turn != awaiting_turn_)) {
      return DecisionOutcome::kNotAwaiting;
    }
    pending_decision_ = action;
    cv_.notify_all();
    return DecisionOutcome::kAccepted;
  }

  bool terminal() const {
    std::lock_guard lock(mu_);
    return terminal_;
  }

  Clock::time_point terminal_at() const {
    std::lock_guard lock(mu_);
    return terminal_at_;
  }

  // Copies events with seq >= from; waits up to `wait` for new ones. Sets
  // `done` when the session is terminal and nothing remains after the copy.
  std::vector<SessionEvent> events_from(int64_t from,
                                        std::chrono::milliseconds wait,
                                        bool& done) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, wait, [&] {
      return static_cast<int64_t>(events_.size()) > from || terminal_ ||
             shutting_down_;
    });
    std::vector<SessionEvent> out;
    for (int64_t i = std::max<int64_t>(from, 0);
         i < static_cast<int64_t>(events_.size()); ++i) {
      out.push_back(events_[static_cast<size_t>(i)]);
    }
    done = terminal_ || shutting_down_;
    return out;
  }

  nlohmann::json summary() const {
    std::lock_guard lock(mu_);
    nlohmann::json answers = nlohmann::json::array();
    for (const auto& t : turns_) answers.push_back(t.turn.answer);
    nlohmann::json j = {{"id", id_},
                        {"created_at", created_at_},
                        {"status", to_string(status_)},
                        {"turn_count", turns_.size()},
                        {"answers", answers},
                        {"stats", stats_json(totals_)},
                        {"transcript", transcript_},
                        {"config", to_json(config_)},
                        {"event_count", events_.size()}};
    if (!error_.empty()) j["error"] = error_;
    if (!end_reason_.empty()) j["end_reason"] = end_reason_;
    return j;
  }

  // SessionObserver, called on the worker thread.
  void on_turn_started(int turn) override {
    push("turn_started", {{"turn", turn}});
  }
  void on_status_changed(SessionStatus s) override {
    std::lock_guard lock(mu_);
    status_ = s;
  }
  void on_think_delta(int turn, const std::string& delta) override {
    if (!delta.empty()) push("think_delta", {{"turn", turn}, {"delta", delta}});
  }
  void on_answer_delta(int turn, const std::string& delta) override {
    if (!delta.empty()) push("answer_delta", {{"turn", turn}, {"delta", delta}});
  }
  void on_turn_completed(const TurnRecord& r, const SessionState& state) override {
    {
      std::lock_guard lock(mu_);
      turns_.push_back(r);
      totals_ = state.totals;
      transcript_ = state.transcript();
    }
    push("turn_completed",
         {{"turn", r.turn.unit.index},
          {"think", r.turn.unit.text},
          {"answer", r.turn.answer},
          {"forced_close", r.forced_close},
          {"tokens",
           {{"prompt", r.stats.prompt_tokens},
            {"output", r.stats.output_tokens},
            {"think", r.think_tokens},
            {"answer", r.answer_tokens}}},
          {"elapsed_ms", r.elapsed_ms}});
  }
  void on_awaiting_decision(const SessionState& state) override {
    std::lock_guard lock(mu_);
    status_ = SessionStatus::kAwaitingDecision;
    pending_decision_.reset();
    awaiting_turn_ = static_cast<int>(state.turns.size());
    push_locked("awaiting_decision",
                {{"turn", state.turns.size()},
                 {"timeout_ms", config_.decision_timeout.count()}});
  }

 private:
  std::optional<HaltDecision::Action> wait_decision(
      std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout,
                 [&] { return pending_decision_.has_value() || shutting_down_; });
    std::optional<HaltDecision::Action> d = pending_decision_;
    // Leaving the awaiting state here makes a late decision a 409.
    status_ = SessionStatus::kThinking;
    return d;
  }

  void run(Backend& backend) {
    SessionResult result = TurnController(backend, config_, this,
                                          [this](std::chrono::milliseconds t) {
                                            return wait_decision(t);
                                          })
                               .run_session(query_);
    std::lock_guard lock(mu_);
    status_ = result.status;
    totals_ = result.stats;
    transcript_ = result.transcript;
    error_ = result.error;
    end_reason_ = result.end_reason;
    nlohmann::json turns = nlohmann::json::array();
    for (const auto& t : result.turns) {
      turns.push_back({{"turn", t.turn.unit.index}, {"answer", t.turn.answer}});
    }
    if (result.status == SessionStatus::kCompleted) {
      nlohmann::json data = {{"final_answer", result.response->final_answer()},
                             {"turn_count", result.turns.size()},
                             {"turns", turns},
                             {"stats", stats_json(result.stats)},
                             {"end_reason", result.end_reason},
                             {"transcript", result.transcript}};
      if (result.last_decision) {
        data["halt_origin"] = to_string(result.last_decision->origin);
      }
      push_locked("session_completed", std::move(data));
    } else {
      push_locked("session_failed", {{"error", result.error},
                                     {"turn_count", result.turns.size()},
                                     {"turns", turns},
                                     {"stats", stats_json(result.stats)},
                                     {"transcript", result.transcript}});
    }
    terminal_ = true;
    terminal_at_ = Clock::now();
    write_transcript_locked();
    cv_.notify_all();
  }

  void push(std::string type, nlohmann::json data) {
    std::lock_guard lock(mu_);
    push_locked(std::move(type), std::move(data));
  }

  void push_locked(std::string type, nlohmann::json data) {
    events_.push_back({static_cast<int64_t>(events_.size()), std::move(type),
                       std::move(data)});
    cv_.notify_all();
  }

  void write_transcript_locked() {
    if (transcript_path_.empty()) return;
    std::ofstream out(transcript_path_, std::ios::app);
    for (const auto& e : events_) {
      out << nlohmann::json{{"seq", e.seq}, {"type", e.type}, {"data", e.data}}
                 .dump()
          << '\n';
    }
  }

  const std::string id_;
  const std::string created_at_;
  const Query query_;
  const SessionConfig config_;
  const std::string transcript_path_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<SessionEvent> events_;
  SessionStatus status_ = SessionStatus::kThinking;
  std::optional<HaltDecision::Action> pending_decision_;
  int awaiting_turn_ = 0;
  std::vector<TurnRecord> turns_;
  TokenStats totals_;
  std::string transcript_;
  std::string error_;
  std::string end_reason_;
  bool terminal_ = false;
  bool shutting_down_ = false;
  Clock::time_point terminal_at_;
  std::thread worker_;
};

inline std::string format_sse(const SessionEvent& e, const std::string& session_id) {
  nlohmann::json envelope = {{"seq", e.seq},
                             {"type", e.type},
                             {"session_id", session_id},
                             {"data", e.data}};
  return "id: " + std::to_string(e.seq) + "\nevent: " + e.type +
         "\ndata: " + envelope.dump() + "\n\n";
}

class Gateway {
 public:
  Gateway(Backend& backend, GatewayConfig config, SessionConfig defaults = {})
      : backend_(backend), config_(std::move(config)),
        defaults_(std::move(defaults)) {
    config_.validate();
    defaults_.validate();
    if (!config_.transcript_dir.empty()) {
      std::filesystem::create_directories(config_.transcript_dir);
    }
    const int threads = config_.threads;
    server_.new_task_queue = [threads] {
      return new httplib::ThreadPool(static_cast<size_t>(threads));
    };
    routes();
  }

  ~Gateway() { stop(); }

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  int start() {
    int port = config_.port == 0
                   ? server_.bind_to_any_port(config_.host)
                   : (server_.bind_to_port(config_.host, config_.port)
                          ? config_.port
                          : -1);
    if (port < 0) {
      throw std::runtime_error("cannot bind " + config_.host + ":" +
                               std::to_string(config_.port));
    }
    port_ = port;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  // Blocks serving on the calling thread.
  bool serve() {
    return server_.listen(config_.host, config_.port);
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    std::vector<std::shared_ptr<GatewaySession>> sessions;
    {
      std::lock_guard lock(mu_);
      for (auto& [_, s] : sessions_) sessions.push_back(s);
    }
    for (auto& s : sessions) s->shutdown();
    server_.stop();
    if (thread_.joinable()) thread_.join();
    for (auto& s : sessions) s->join();
  }

  int port() const { return port_; }

  std::shared_ptr<GatewaySession> find(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  size_t live_sessions() {
    std::lock_guard lock(mu_);
    size_t live = 0;
    for (auto& [_, s] : sessions_) live += s->terminal() ? 0 : 1;
    return live;
  }

 private:
  static void json_response(httplib::Response& res, int status,
                            const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void error_response(httplib::Response& res, int status,
                             const std::string& message) {
    json_response(res, status, {{"error", message}});
  }

  // Drops terminal sessions whose retention window has passed.
  void sweep_locked() {
    auto now = Clock::now();
    std::erase_if(sessions_, [&](const auto& entry) {
      const auto& s = entry.second;
      return s->terminal() && now - s->terminal_at() >= config_.event_ttl;
    });
  }

  void routes() {
    server_.Post("/v1/sessions", [this](const httplib::Request& req,
                                        httplib::Response& res) {
      create(req, res);
    });
    server_.Get(R"(/v1/sessions/([0-9a-f]+))",
                [this](const httplib::Request& req, httplib::Response& res) {
                  auto s = find(req.matches[1]);
                  if (!s) return error_response(res, 404, "unknown session");
                  json_response(res, 200, s->summary());
                });
    server_.Get(R"(/v1/sessions/([0-9a-f]+)/events)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  stream(req, res);
                });
    server_.Post(R"(/v1/sessions/([0-9a-f]+)/decision)",
                 [this](const httplib::Request& req, httplib::Response& res) {
                   decide(req, res);
                 });
    server_.Get("/healthz", [this](const httplib::Request&,
                                   httplib::Response& res) {
      size_t total = 0;
      {
        std::lock_guard lock(mu_);
        total = sessions_.size();
      }
      bool reachable = false;
      try {
        reachable = backend_.reachable();
      } catch (const std::exception&) {
      }
      json_response(res, 200,
                    {{"status", "ok"},
                     {"sessions", {{"live", live_sessions()}, {"total", total}}},
                     {"backend", {{"reachable", reachable}}}});
    });
  }

  void create(const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) {
      return error_response(res, 400, "body must be a JSON object");
    }
    for (const auto& [key, _] : body.items()) {
      if (key != "problem" && key != "id" && key != "config") {
        return error_response(res, 400, "unknown field: " + key);
      }
    }
    if (!body.contains("problem") || !body["problem"].is_string() ||
        text::trim(body["problem"].get<std::string>()).empty()) {
      return error_response(res, 400, "problem must be a non-empty string");
    }
    SessionConfig cfg = defaults_;
    try {
      if (body.contains("config")) apply_session_json(cfg, body["config"], "config");
      cfg.validate();
    } catch (const std::exception& e) {
      return error_response(res, 400, e.what());
    }
    if (cfg.max_turns > config_.max_turns_limit) {
      return error_response(res, 400,
                            "max_turns exceeds limit " +
                                std::to_string(config_.max_turns_limit));
    }
    std::string query_id;
    if (body.contains("id")) {
      if (!body["id"].is_string()) return error_response(res, 400, "id must be a string");
      query_id = body["id"].get<std::string>();
    }

    std::shared_ptr<GatewaySession> session;
    {
      std::lock_guard lock(mu_);
      if (stopped_) return error_response(res, 503, "shutting down");
      sweep_locked();
      size_t live = 0;
      for (auto& [_, s] : sessions_) live += s->terminal() ? 0 : 1;
      if (live >= static_cast<size_t>(config_.capacity)) {
        return error_response(res, 429, "session capacity reached");
      }
      std::string id;
      do {
        id = new_session_id();
      } while (sessions_.count(id));
      std::string log_path;
      if (!config_.transcript_dir.empty()) {
        log_path = (std::filesystem::path(config_.transcript_dir) /
                    (id + ".jsonl"))
                       .string();
      }
      session = std::make_shared<GatewaySession>(
          id, Query(query_id.empty() ? id : query_id,
                    body["problem"].get<std::string>()),
          cfg, log_path);
      sessions_.emplace(id, session);
      session->start(backend_);
    }
    json_response(res, 201,
                  {{"id", session->id()},
                   {"created_at", session->created_at()},
                   {"config", to_json(session->config())}});
  }

  void decide(const httplib::Request& req, httplib::Response& res) {
    auto s = find(req.matches[1]);
    if (!s) return error_response(res, 404, "unknown session");
    auto body = nlohmann::json::parse(req.body, nullptr, false);
    std::string action =
        body.is_object() && body.contains("action") && body["action"].is_string()
            ? body["action"].get<std::string>()
            : "";
    HaltDecision::Action a;
    if (action == "continue") {
      a = HaltDecision::Action::kContinue;
    } else if (action == "halt") {
      a = HaltDecision::Action::kHalt;
    } else {
      return error_response(res, 400, "action must be 'continue' or 'halt'");
    }
    std::optional<int> turn;
    if (body.contains("turn")) {
      if (!body["turn"].is_number_integer()) {
        return error_response(res, 400, "turn must be an integer");
      }
      turn = body["turn"].get<int>();
    }
    if (s->post_decision(a, turn) != GatewaySession::DecisionOutcome::kAccepted) {
      return error_response(res, 409, "session is not awaiting a decision");
    }
    json_response(res, 200, {{"id", s->id()}, {"action", action}, {"accepted", true}});
  }

  void stream(const httplib::Request& req, httplib::Response& res) {
    auto s = find(req.matches[1]);
    if (!s) return error_response(res, 404, "unknown session");
    int64_t next = 0;
    std::string resume = req.get_header_value("Last-Event-ID");
    if (resume.empty() && req.has_param("last_event_id")) {
      resume = req.get_param_value("last_event_id");
    }
    if (!resume.empty()) {
      try {
        next = std::stoll(resume) + 1;
      } catch (const std::exception&) {
        return error_response(res, 400, "Last-Event-ID must be an integer");
      }
    }
    auto cursor = std::make_shared<int64_t>(std::max<int64_t>(next, 0));
    const auto keepalive = config_.keepalive;
    res.set_header("Cache-Control", "no-cache");
    res.set_header("X-Accel-Buffering", "no");
    res.set_chunked_content_provider(
        "text/event-stream",
        [s, cursor, keepalive, this](size_t, httplib::DataSink& sink) {
          if (stopped_) return false;
          bool done = false;
          auto events = s->events_from(*cursor, keepalive, done);
          std::string out;
          for (const auto& e : events) {
            out += format_sse(e, s->id());
            *cursor = e.seq + 1;
          }
          if (out.empty() && !done) out = ": keep-alive\n\n";
          if (!out.empty()) {
            if (!sink.is_writable() || !sink.write(out.data(), out.size())) {
              return false;
            }
          }
          if (done) sink.done();
          return true;
        });
  }

  Backend& backend_;
  GatewayConfig config_;
  SessionConfig defaults_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<bool> stopped_{false};
  std::mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<GatewaySession>> sessions_;
};

}  // namespace turnwise
