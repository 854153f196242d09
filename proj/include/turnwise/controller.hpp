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
 * Turn-wise decoding loop.
 *
 * Each turn runs two generations against the same backend:
 *
 *   think:  prefix = transcript + "<think>",            stop = ["</think>"]
 *   answer: prefix = transcript + "<think>" u "</think>", stop = ["<think>"]
 *
 * When the think phase hits its token budget (or the model stops without
 * closing the block) "</think>" is appended as forced context, so every turn
 * still yields an answer. An answer phase that ends on end-of-sequence means
 * the model finished the whole response and the session completes.
 *
 * After each turn a halting policy decides: fixed (run to max_turns),
 * consistency (the last `window` answers agree after normalization) or
 * manual (an external provider decides; silence until the timeout halts).
 *
 * TTFT is measured from session start to the first answer-phase token of
 * turn 1. Think tokens never count as first token.
 */

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "turnwise/answer.hpp"
#include "turnwise/backend.hpp"
#include "turnwise/format.hpp"
#include "turnwise/prompts.hpp"
#include "turnwise/types.hpp"

namespace turnwise {

enum class HaltPolicy { kFixed, kConsistency, kManual };

inline const char* to_string(HaltPolicy p) {
  switch (p) {
    case HaltPolicy::kFixed: return "fixed";
    case HaltPolicy::kConsistency: return "consistency";
    case HaltPolicy::kManual: return "manual";
  }
  return "unknown";
}

inline HaltPolicy parse_halt_policy(std::string_view s) {
  if (s == "fixed") return HaltPolicy::kFixed;
  if (s == "consistency") return HaltPolicy::kConsistency;
  if (s == "manual") return HaltPolicy::kManual;
  throw ValidationError("unknown halt policy: " + std::string(s));
}

struct SessionConfig {
  int max_turns = 16;
  HaltPolicy halt_policy = HaltPolicy::kFixed;
  int consistency_window = 2;
  int think_budget = 2048;       // max tokens per think phase
  int answer_max_tokens = 1024;  // max tokens per answer phase
  double temperature = 0.6;
  double top_p = 0.95;
  std::chrono::milliseconds decision_timeout{300'000};
  std::optional<uint64_t> seed;
  bool stream = true;

  void validate() const {
    if (max_turns < 1) throw ValidationError("max_turns must be >= 1");
    if (consistency_window < 2) {
      throw ValidationError("consistency window must be >= 2");
    }
    if (think_budget < 1) throw ValidationError("think_budget must be >= 1");
    if (answer_max_tokens < 1) {
      throw ValidationError("answer_max_tokens must be >= 1");
    }
    if (temperature < 0.0) throw ValidationError("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) {
      throw ValidationError("top_p must be in (0, 1]");
    }
    if (decision_timeout.count() < 0) {
      throw ValidationError("decision timeout must be >= 0");
    }
  }
};

enum class SessionStatus {
  kThinking,
  kAnswering,
  kAwaitingDecision,
  kCompleted,
  kFailed,
};

inline const char* to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::kThinking: return "thinking";
    case SessionStatus::kAnswering: return "answering";
    case SessionStatus::kAwaitingDecision: return "awaiting_decision";
    case SessionStatus::kCompleted: return "completed";
    case SessionStatus::kFailed: return "failed";
  }
  return "unknown";
}

struct HaltDecision {
  enum class Action { kContinue, kHalt };
  enum class Origin { kPolicy, kExternal, kTimeout };

  Action action = Action::kContinue;
  Origin origin = Origin::kPolicy;
};

inline const char* to_string(HaltDecision::Action a) {
  return a == HaltDecision::Action::kHalt ? "halt" : "continue";
}

inline const char* to_string(HaltDecision::Origin o) {
  switch (o) {
    case HaltDecision::Origin::kPolicy: return "policy";
    case HaltDecision::Origin::kExternal: return "external";
    case HaltDecision::Origin::kTimeout: return "timeout";
  }
  return "unknown";
}

struct TurnRecord {
  Turn turn;
  TokenStats stats;  // prompt_tokens: context of the think request
  int64_t think_tokens = 0;
  int64_t answer_tokens = 0;
  bool forced_close = false;
  double elapsed_ms = 0.0;  // session start to end of this turn
};

struct SessionState {
  Query query;
  std::vector<TurnRecord> turns;
  SessionStatus status = SessionStatus::kThinking;
  TokenStats totals;
  bool model_ended = false;  // answer phase finished on end-of-sequence
  std::optional<double> ttft_ms;
  Clock::time_point started = Clock::now();

  std::string transcript() const {
    std::string s;
    for (const auto& t : turns) {
      s.append(kThinkOpen).append(t.turn.unit.text).append(kThinkClose);
      s.append(t.turn.answer);
    }
    return s;
  }
};

// Hooks for live observers. Called on the session's own thread.
class SessionObserver {
 public:
  virtual ~SessionObserver() = default;
  virtual void on_turn_started(int /*turn*/) {}
  virtual void on_status_changed(SessionStatus /*status*/) {}
  virtual void on_think_delta(int /*turn*/, const std::string& /*delta*/) {}
  virtual void on_answer_delta(int /*turn*/, const std::string& /*delta*/) {}
  virtual void on_turn_completed(const TurnRecord& /*record*/,
                                 const SessionState& /*state*/) {}
  virtual void on_awaiting_decision(const SessionState& /*state*/) {}
  virtual void on_decision(const HaltDecision& /*decision*/) {}
};

// Blocks for at most `timeout` waiting for an external decision; nullopt when
// none arrived in time.
using DecisionProvider = std::function<std::optional<HaltDecision::Action>(
    std::chrono::milliseconds timeout)>;

class SessionFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool consistent_tail(const std::vector<TurnRecord>& turns, int window) {
  if (window < 2 || static_cast<int>(turns.size()) < window) return false;
  auto key = [](const std::string& answer) {
    auto boxed = extract_boxed(answer);
    return boxed ? *boxed : std::string(answer);
  };
  const std::string first = key(turns[turns.size() - window].turn.answer);
  for (size_t i = turns.size() - window + 1; i < turns.size(); ++i) {
    if (!answers_equal(key(turns[i].turn.answer), first)) return false;
  }
  return true;
}

inline HaltDecision decide_halt(SessionState& state, const SessionConfig& config,
                                const DecisionProvider& provider = nullptr,
                                SessionObserver* observer = nullptr) {
  using A = HaltDecision::Action;
  using O = HaltDecision::Origin;
  if (state.turns.empty()) throw ValidationError("no completed turn to judge");
  if (static_cast<int>(state.turns.size()) >= config.max_turns) {
    return {A::kHalt, O::kPolicy};
  }
  switch (config.halt_policy) {
    case HaltPolicy::kFixed:
      return {A::kContinue, O::kPolicy};
    case HaltPolicy::kConsistency:
      return {consistent_tail(state.turns, config.consistency_window)
                  ? A::kHalt
                  : A::kContinue,
              O::kPolicy};
    case HaltPolicy::kManual: {
      state.status = SessionStatus::kAwaitingDecision;
      if (observer) observer->on_awaiting_decision(state);
      std::optional<A> action;
      if (provider) action = provider(config.decision_timeout);
      if (!action) return {A::kHalt, O::kTimeout};
      return {*action, O::kExternal};
    }
  }
  return {A::kHalt, O::kPolicy};
}

struct SessionResult {
  SessionStatus status = SessionStatus::kCompleted;
  std::optional<MultiTurnResponse> response;  // absent when no turn completed
  std::vector<TurnRecord> turns;
  TokenStats stats;
  bool has_ttft = false;  // false when no answer token was produced
  std::string transcript;
  std::string error;
  std::string end_reason;  // max_turns, consistency, external, timeout, eos
  std::optional<HaltDecision> last_decision;
};

class TurnController {
 public:
  TurnController(Backend& backend, SessionConfig config,
                 SessionObserver* observer = nullptr,
                 DecisionProvider provider = nullptr)
      : backend_(backend), config_(std::move(config)), observer_(observer),
        provider_(std::move(provider)) {
    config_.validate();
  }

  const SessionConfig& config() const { return config_; }

  // One think/answer round; throws BackendError or SessionFailure with the
  // state left as it was before the turn.
  void run_turn(SessionState& state) {
    if (static_cast<int>(state.turns.size()) >= config_.max_turns) {
      throw SessionFailure("max_turns reached");
    }
    const int k = static_cast<int>(state.turns.size()) + 1;
    const std::string prefix = state.transcript();
    if (observer_) observer_->on_turn_started(k);

    set_status(state, SessionStatus::kThinking);
    GenerationRequest think = base_request(state);
    think.assistant_prefix = prefix + std::string(kThinkOpen);
    think.stop = {std::string(kThinkClose)};
    think.max_tokens = config_.think_budget;
    GenerationResult t = generate(think, [&](const StreamEvent& e) {
      if (observer_) observer_->on_think_delta(k, e.delta);
    });
    const bool forced = t.finish != FinishReason::kStopSequence;
    if (t.text.empty()) throw SessionFailure("model produced an empty thinking unit");
    if (contains_think_tag(t.text)) {
      throw SessionFailure("thinking unit contains a think tag");
    }

    set_status(state, SessionStatus::kAnswering);
    GenerationRequest answer = base_request(state);
    answer.assistant_prefix = prefix + std::string(kThinkOpen) + t.text;
    answer.stop = {std::string(kThinkOpen)};
    answer.max_tokens = config_.answer_max_tokens;
    if (!forced) answer.assistant_prefix += kThinkClose;
    auto on_answer = [&](const StreamEvent& e) {
      if (k == 1 && !state.ttft_ms && !e.delta.empty()) {
        state.ttft_ms = std::max(0.0, ms_between(state.started, e.timestamp));
      }
      if (observer_) observer_->on_answer_delta(k, e.delta);
    };
    GenerationResult a =
        forced ? forced_generate(answer, on_answer) : generate(answer, on_answer);
    if (k == 1 && !state.ttft_ms && a.first_token) {
      state.ttft_ms = std::max(0.0, ms_between(state.started, *a.first_token));
    }
    std::string_view answer_text = text::trim(a.text);
    if (answer_text.empty()) throw SessionFailure("model produced an empty answer");
    if (contains_think_tag(answer_text)) {
      throw SessionFailure("answer contains a think tag");
    }

    TurnRecord rec{Turn(ThinkingUnit(k, t.text), answer_text), {}, 0, 0, forced,
                   0.0};
    rec.think_tokens = t.usage.completion_tokens;
    rec.answer_tokens = a.usage.completion_tokens;
    rec.stats.prompt_tokens = t.usage.prompt_tokens;
    rec.stats.output_tokens = rec.think_tokens + rec.answer_tokens;
    rec.stats.estimated = t.usage.estimated || a.usage.estimated;
    rec.elapsed_ms = ms_between(state.started, Clock::now());
    rec.stats.total_ms = rec.elapsed_ms;
    rec.stats.ttft_ms = k == 1 && state.ttft_ms ? *state.ttft_ms : 0.0;
    state.totals += rec.stats;
    state.model_ended = a.finish == FinishReason::kEndOfSequence;
    state.turns.push_back(std::move(rec));
    if (observer_) observer_->on_turn_completed(state.turns.back(), state);
  }

  SessionResult run_session(const Query& query) {
    SessionState state;
    state.query = query;
    state.started = Clock::now();
    SessionResult result;
    try {
      for (;;) {
        run_turn(state);
        if (state.model_ended) {
          result.end_reason = "eos";
          break;
        }
        HaltDecision d = decide_halt(state, config_, provider_, observer_);
        result.last_decision = d;
        if (observer_) observer_->on_decision(d);
        if (d.action == HaltDecision::Action::kHalt) {
          result.end_reason = end_reason(d, state);
          break;
        }
      }
      state.status = SessionStatus::kCompleted;
    } catch (const BackendError& e) {
      state.status = SessionStatus::kFailed;
      result.error = std::string("backend ") + to_string(e.kind()) + ": " +
                     e.what();
    } catch (const SessionFailure& e) {
      state.status = SessionStatus::kFailed;
      result.error = e.what();
    }
    return finish(state, std::move(result));
  }

 private:
  void set_status(SessionState& state, SessionStatus s) {
    state.status = s;
    if (observer_) observer_->on_status_changed(s);
  }

  GenerationRequest base_request(const SessionState& state) const {
    GenerationRequest r;
    r.prompt = prompts::render_qa(state.query.problem);
    r.temperature = config_.temperature;
    r.top_p = config_.top_p;
    r.seed = config_.seed;
    r.stream = config_.stream;
    return r;
  }

  GenerationResult generate(const GenerationRequest& r, const StreamSink& sink) {
    return r.stream ? backend_.generate_stream(r, sink) : backend_.generate(r);
  }

  GenerationResult forced_generate(const GenerationRequest& r,
                                   const StreamSink& sink) {
    return continue_with_forced_suffix(backend_, r, kThinkClose,
                                       r.stream ? sink : nullptr);
  }

  std::string end_reason(const HaltDecision& d, const SessionState& s) const {
    if (d.origin == HaltDecision::Origin::kTimeout) return "timeout";
    if (d.origin == HaltDecision::Origin::kExternal) return "external";
    if (static_cast<int>(s.turns.size()) >= config_.max_turns) return "max_turns";
    return "consistency";
  }

  static SessionResult finish(SessionState& state, SessionResult result) {
    result.status = state.status;
    result.turns = state.turns;
    result.transcript = state.transcript();
    if (!state.turns.empty()) {
      std::vector<Turn> turns;
      for (const auto& t : state.turns) turns.push_back(t.turn);
      result.response.emplace(std::move(turns));
    }
    result.stats = state.totals;
    result.stats.total_ms = ms_between(state.started, Clock::now());
    result.has_ttft = state.ttft_ms.has_value();
    result.stats.ttft_ms = state.ttft_ms.value_or(result.stats.total_ms);
    if (result.stats.ttft_ms > result.stats.total_ms) {
      result.stats.ttft_ms = result.stats.total_ms;
    }
    return result;
  }

  Backend& backend_;
  SessionConfig config_;
  SessionObserver* observer_;
  DecisionProvider provider_;
};

inline SessionResult run_session(const Query& query, const SessionConfig& config,
                                 Backend& backend,
                                 SessionObserver* observer = nullptr,
                                 DecisionProvider provider = nullptr) {
  return TurnController(backend, config, observer, std::move(provider))
      .run_session(query);
}

}  // namespace turnwise
