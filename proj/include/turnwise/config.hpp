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
 * Configuration shared by the CLI and the gateway.
 *
 * A JSON file with optional sections
 *
 *   {"backend": {...}, "session": {...}, "gateway": {...}, "reward": {...}}
 *
 * is layered over built-in defaults, then TURNWISE_* environment variables
 * are layered over the file. Unknown keys are rejected so typos surface.
 */

#include <cstdlib>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <optional>
#include <set>
#include <string>

#include "turnwise/controller.hpp"
#include "turnwise/openai_client.hpp"
#include "turnwise/reward.hpp"

namespace turnwise {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GatewayConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int capacity = 64;  // concurrently running sessions
  std::chrono::seconds event_ttl{3600};
  std::string transcript_dir;  // empty: no on-disk transcript log
  int threads = 128;           // HTTP worker threads; each SSE stream holds one
  std::chrono::milliseconds keepalive{15'000};
  int max_turns_limit = 64;  // upper bound for per-session max_turns overrides

  void validate() const {
    if (port < 0 || port > 65535) throw ConfigError("gateway port out of range");
    if (capacity < 1) throw ConfigError("gateway capacity must be >= 1");
    if (threads < 2) throw ConfigError("gateway threads must be >= 2");
    if (event_ttl.count() < 0) throw ConfigError("event ttl must be >= 0");
    if (keepalive.count() <= 0) throw ConfigError("keepalive must be > 0");
    if (max_turns_limit < 1) throw ConfigError("max_turns_limit must be >= 1");
  }
};

struct AppConfig {
  BackendConfig backend;
  SessionConfig session;
  GatewayConfig gateway;
  RewardConfig reward;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in " + section);
    }
  }
}

template <typename T>
T get_as(const nlohmann::json& j, const std::string& key,
         const std::string& section) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value for '" + key + "' in " + section);
  }
}

}  // namespace detail

inline const char* to_string(ApiMode m) {
  return m == ApiMode::kChat ? "chat" : "completions";
}

inline ApiMode parse_api_mode(std::string_view s) {
  if (s == "completions") return ApiMode::kCompletions;
  if (s == "chat") return ApiMode::kChat;
  throw ConfigError("backend mode must be 'completions' or 'chat'");
}

inline nlohmann::json to_json(const SessionConfig& c) {
  nlohmann::json j = {{"max_turns", c.max_turns},
                      {"halt_policy", to_string(c.halt_policy)},
                      {"consistency_window", c.consistency_window},
                      {"think_budget", c.think_budget},
                      {"answer_max_tokens", c.answer_max_tokens},
                      {"temperature", c.temperature},
                      {"top_p", c.top_p},
                      {"decision_timeout_ms", c.decision_timeout.count()},
                      {"stream", c.stream}};
  j["seed"] = c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr);
  return j;
}

// Applies the keys present in `j`; throws ConfigError on unknown keys or
// wrongly typed values. Does not validate the result.
inline void apply_session_json(SessionConfig& c, const nlohmann::json& j,
                               const std::string& section = "session") {
  using detail::get_as;
  detail::check_keys(j,
                     {"max_turns", "halt_policy", "consistency_window",
                      "think_budget", "answer_max_tokens", "temperature",
                      "top_p", "decision_timeout_ms", "seed", "stream"},
                     section);
  if (j.contains("max_turns")) c.max_turns = get_as<int>(j, "max_turns", section);
  if (j.contains("halt_policy")) {
    try {
      c.halt_policy =
          parse_halt_policy(get_as<std::string>(j, "halt_policy", section));
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("consistency_window")) {
    c.consistency_window = get_as<int>(j, "consistency_window", section);
  }
  if (j.contains("think_budget")) {
    c.think_budget = get_as<int>(j, "think_budget", section);
  }
  if (j.contains("answer_max_tokens")) {
    c.answer_max_tokens = get_as<int>(j, "answer_max_tokens", section);
  }
  if (j.contains("temperature")) {
    c.temperature = get_as<double>(j, "temperature", section);
  }
  if (j.contains("top_p")) c.top_p = get_as<double>(j, "top_p", section);
  if (j.contains("decision_timeout_ms")) {
    c.decision_timeout = std::chrono::milliseconds(
        get_as<int64_t>(j, "decision_timeout_ms", section));
  }
  if (j.contains("seed")) {
    if (j["seed"].is_null()) {
      c.seed.reset();
    } else {
      c.seed = get_as<uint64_t>(j, "seed", section);
    }
  }
  if (j.contains("stream")) c.stream = get_as<bool>(j, "stream", section);
}

inline void apply_backend_json(BackendConfig& c, const nlohmann::json& j) {
  using detail::get_as;
  const std::string s = "backend";
  detail::check_keys(j,
                     {"base_url", "model", "api_key_env", "timeout_ms",
                      "max_retries", "retry_backoff_ms", "max_in_flight", "mode"},
                     s);
  if (j.contains("base_url")) c.base_url = get_as<std::string>(j, "base_url", s);
  if (j.contains("model")) c.model = get_as<std::string>(j, "model", s);
  if (j.contains("api_key_env")) {
    c.api_key_env = get_as<std::string>(j, "api_key_env", s);
  }
  if (j.contains("timeout_ms")) {
    c.timeout = std::chrono::milliseconds(get_as<int64_t>(j, "timeout_ms", s));
  }
  if (j.contains("max_retries")) c.max_retries = get_as<int>(j, "max_retries", s);
  if (j.contains("retry_backoff_ms")) {
    c.retry_backoff =
        std::chrono::milliseconds(get_as<int64_t>(j, "retry_backoff_ms", s));
  }
  if (j.contains("max_in_flight")) {
    c.max_in_flight = get_as<int>(j, "max_in_flight", s);
  }
  if (j.contains("mode")) c.mode = parse_api_mode(get_as<std::string>(j, "mode", s));
}

inline void apply_gateway_json(GatewayConfig& c, const nlohmann::json& j) {
  using detail::get_as;
  const std::string s = "gateway";
  detail::check_keys(j,
                     {"host", "port", "capacity", "event_ttl_s",
                      "transcript_dir", "threads", "keepalive_ms",
                      "max_turns_limit"},
                     s);
  if (j.contains("host")) c.host = get_as<std::string>(j, "host", s);
  if (j.contains("port")) c.port = get_as<int>(j, "port", s);
  if (j.contains("capacity")) c.capacity = get_as<int>(j, "capacity", s);
  if (j.contains("event_ttl_s")) {
    c.event_ttl = std::chrono::seconds(get_as<int64_t>(j, "event_ttl_s", s));
  }
  if (j.contains("transcript_dir")) {
    c.transcript_dir = get_as<std::string>(j, "transcript_dir", s);
  }
  if (j.contains("threads")) c.threads = get_as<int>(j, "threads", s);
  if (j.contains("keepalive_ms")) {
    c.keepalive = std::chrono::milliseconds(get_as<int64_t>(j, "keepalive_ms", s));
  }
  if (j.contains("max_turns_limit")) {
    c.max_turns_limit = get_as<int>(j, "max_turns_limit", s);
  }
}

inline nlohmann::json to_json(const RewardConfig& c) {
  return {{"format_pass", c.format_pass},     {"format_fail", c.format_fail},
          {"accuracy_pass", c.accuracy_pass}, {"accuracy_fail", c.accuracy_fail},
          {"unit_pass", c.unit_pass},         {"unit_fail", c.unit_fail}};
}

inline void apply_reward_json(RewardConfig& c, const nlohmann::json& j) {
  using detail::get_as;
  const std::string s = "reward";
  detail::check_keys(j,
                     {"format_pass", "format_fail", "accuracy_pass",
                      "accuracy_fail", "unit_pass", "unit_fail"},
                     s);
  for (auto [key, field] :
       {std::pair{"format_pass", &c.format_pass},
        std::pair{"format_fail", &c.format_fail},
        std::pair{"accuracy_pass", &c.accuracy_pass},
        std::pair{"accuracy_fail", &c.accuracy_fail},
        std::pair{"unit_pass", &c.unit_pass},
        std::pair{"unit_fail", &c.unit_fail}}) {
    if (j.contains(key)) *field = get_as<double>(j, key, s);
  }
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
  return j;
}

// Reward settings file: either the flat six keys or {"reward": {...}}.
inline RewardConfig load_reward_config(const std::string& path) {
  nlohmann::json j = read_json_file(path);
  RewardConfig c;
  apply_reward_json(c, j.contains("reward") ? j["reward"] : j);
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
  const char* v = std::getenv(name);
  if (!v) return std::nullopt;
  return std::string(v);
}

namespace detail {

inline int64_t env_int(const std::string& name, const std::string& value) {
  try {
    size_t used = 0;
    int64_t v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(name + " must be an integer, got '" + value + "'");
  }
}

}  // namespace detail

inline void apply_env(AppConfig& c, const EnvLookup& env) {
  auto str = [&](const char* name, std::string& field) {
    if (auto v = env(name)) field = *v;
  };
  auto num = [&](const char* name, auto setter) {
    if (auto v = env(name)) setter(detail::env_int(name, *v));
  };
  str("TURNWISE_BACKEND_URL", c.backend.base_url);
  str("TURNWISE_MODEL", c.backend.model);
  str("TURNWISE_API_KEY_ENV", c.backend.api_key_env);
  num("TURNWISE_TIMEOUT_MS",
      [&](int64_t v) { c.backend.timeout = std::chrono::milliseconds(v); });
  num("TURNWISE_MAX_RETRIES",
      [&](int64_t v) { c.backend.max_retries = static_cast<int>(v); });
  num("TURNWISE_MAX_IN_FLIGHT",
      [&](int64_t v) { c.backend.max_in_flight = static_cast<int>(v); });
  if (auto v = env("TURNWISE_BACKEND_MODE")) c.backend.mode = parse_api_mode(*v);
  str("TURNWISE_GATEWAY_HOST", c.gateway.host);
  num("TURNWISE_GATEWAY_PORT",
      [&](int64_t v) { c.gateway.port = static_cast<int>(v); });
  num("TURNWISE_GATEWAY_CAPACITY",
      [&](int64_t v) { c.gateway.capacity = static_cast<int>(v); });
  num("TURNWISE_EVENT_TTL_S",
      [&](int64_t v) { c.gateway.event_ttl = std::chrono::seconds(v); });
  str("TURNWISE_TRANSCRIPT_DIR", c.gateway.transcript_dir);
  num("TURNWISE_MAX_TURNS",
      [&](int64_t v) { c.session.max_turns = static_cast<int>(v); });
  if (auto v = env("TURNWISE_HALT_POLICY")) {
    try {
      c.session.halt_policy = parse_halt_policy(*v);
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
  }
}

// Precedence: environment > file > defaults.
inline AppConfig load_app_config(const std::optional<std::string>& path,
                                 const EnvLookup& env = process_env) {
  AppConfig c;
  if (path) {
    nlohmann::json j = read_json_file(*path);
    detail::check_keys(j, {"backend", "session", "gateway", "reward"}, "config");
    if (j.contains("backend")) apply_backend_json(c.backend, j["backend"]);
    if (j.contains("session")) apply_session_json(c.session, j["session"]);
    if (j.contains("gateway")) apply_gateway_json(c.gateway, j["gateway"]);
    if (j.contains("reward")) apply_reward_json(c.reward, j["reward"]);
  }
  apply_env(c, env);
  try {
    c.backend.validate();
    c.session.validate();
    c.reward.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.gateway.validate();
  return c;
}

}  // namespace turnwise
