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
 * Client for OpenAI-compatible completion servers (vLLM, SGLang, llama.cpp
 * server, ...).
 *
 * Completions mode posts {model, prompt, max_tokens, temperature, top_p,
 * stop, stream} to <base_url>/completions. Chat mode posts the prompt as a
 * single user message to <base_url>/chat/completions; a non-empty assistant
 * prefix is sent as a trailing assistant message with
 * continue_final_message set, which vLLM-style servers continue verbatim.
 *
 * Streaming responses are server-sent events terminated by "data: [DONE]".
 * A request is retried on connection failures, 429 and 5xx as long as no
 * text has been delivered to the caller; once a delta went out, a broken
 * stream surfaces as kStreamInterrupted with the partial text attached.
 */

#include "turnwise/http.hpp"

#include <chrono>
#include <cstdlib>
#include <json.hpp>
#include <string>
#include <thread>

#include "turnwise/backend.hpp"
#include "turnwise/text.hpp"

namespace turnwise {

enum class ApiMode { kCompletions, kChat };

struct BackendConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model = "default";
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::milliseconds timeout{600'000};
  int max_retries = 2;
  std::chrono::milliseconds retry_backoff{200};
  int max_in_flight = 16;
  ApiMode mode = ApiMode::kCompletions;

  void validate() const {
    if (timeout.count() <= 0) throw std::invalid_argument("timeout must be > 0");
    if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
    if (max_in_flight < 1) {
      throw std::invalid_argument("max_in_flight must be >= 1");
    }
    if (base_url.find("://") == std::string::npos) {
      throw std::invalid_argument("base_url needs a scheme: " + base_url);
    }
  }
};

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // path prefix without trailing slash
};

inline SplitUrl split_url(const std::string& url) {
  size_t scheme = url.find("://");
  size_t slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  SplitUrl out;
  out.origin = url.substr(0, slash);
  out.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

}  // namespace detail

class OpenAiClient : public Backend {
 public:
  explicit OpenAiClient(BackendConfig config)
      : config_(std::move(config)), limiter_(config_.max_in_flight) {
    config_.validate();
    url_ = detail::split_url(config_.base_url);
  }

  const BackendConfig& config() const { return config_; }
  InFlightLimiter& limiter() { return limiter_; }

  GenerationResult generate(const GenerationRequest& request) override {
    return with_retries(request, nullptr);
  }

  GenerationResult generate_stream(const GenerationRequest& request,
                                   const StreamSink& sink) override {
    return with_retries(request, sink ? sink : [](const StreamEvent&) {});
  }

  bool reachable() override {
    httplib::Client cli(url_.origin);
    cli.set_connection_timeout(std::chrono::seconds(2));
    cli.set_read_timeout(std::chrono::seconds(2));
    auto res = cli.Get(url_.path + "/models", auth_headers());
    return res && res->status == 200;
  }

  nlohmann::json request_body(const GenerationRequest& request,
                              bool stream) const {
    nlohmann::json body;
    body["model"] = config_.model;
    if (config_.mode == ApiMode::kCompletions) {
      body["prompt"] = request.context();
    } else {
      nlohmann::json messages = nlohmann::json::array();
      messages.push_back({{"role", "user"}, {"content", request.prompt}});
      if (!request.assistant_prefix.empty()) {
        messages.push_back(
            {{"role", "assistant"}, {"content", request.assistant_prefix}});
        body["continue_final_message"] = true;
        body["add_generation_prompt"] = false;
      }
      body["messages"] = std::move(messages);
    }
    body["max_tokens"] = request.max_tokens;
    body["temperature"] = request.temperature;
    body["top_p"] = request.top_p;
    if (!request.stop.empty()) body["stop"] = request.stop;
    if (request.seed) body["seed"] = *request.seed;
    body["stream"] = stream;
    if (stream) body["stream_options"] = {{"include_usage", true}};
    return body;
  }

 private:
  std::string endpoint() const {
    return url_.path + (config_.mode == ApiMode::kCompletions
                            ? "/completions"
                            : "/chat/completions");
  }

  httplib::Headers auth_headers() const {
    httplib::Headers h;
    if (!config_.api_key_env.empty()) {
      if (const char* key = std::getenv(config_.api_key_env.c_str());
          key && *key) {
        h.emplace("Authorization", std::string("Bearer ") + key);
      }
    }
    return h;
  }

  void configure(httplib::Client& cli) const {
    cli.set_connection_timeout(config_.timeout);
    cli.set_read_timeout(config_.timeout);
    cli.set_write_timeout(config_.timeout);
    cli.set_keep_alive(false);
  }

  static bool retryable(const BackendError& e) {
    switch (e.kind()) {
      case BackendError::Kind::kConnection: return true;
      case BackendError::Kind::kHttpStatus:
        return e.status() == 429 || e.status() >= 500;
      default: return false;
    }
  }

  GenerationResult with_retries(const GenerationRequest& request,
                                const StreamSink& sink) {
    request.validate();
    const auto started = Clock::now();
    for (int attempt = 0;; ++attempt) {
      bool delivered = false;
      try {
        InFlightLimiter::Guard guard(limiter_);
        GenerationResult r = sink ? attempt_stream(request, sink, delivered)
                                  : attempt_plain(request);
        r.retries = attempt;
        r.started = started;
        return r;
      } catch (const BackendError& e) {
        if (attempt < config_.max_retries && !delivered && retryable(e)) {
          std::this_thread::sleep_for(config_.retry_backoff * (1 << attempt));
          continue;
        }
        throw BackendError(e.kind(), e.what(), e.status(), e.partial_text(),
                           attempt);
      }
    }
  }

  BackendError transport_error(httplib::Error err,
                               Clock::time_point started) const {
    double elapsed = ms_between(started, Clock::now());
    bool timed_out =
        err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read &&
         elapsed >= 0.9 * static_cast<double>(config_.timeout.count()));
    if (timed_out) {
      return BackendError(BackendError::Kind::kTimeout,
                          "backend request timed out after " +
                              std::to_string(static_cast<int64_t>(elapsed)) +
                              " ms");
    }
    return BackendError(BackendError::Kind::kConnection,
                        "backend transport error: " + httplib::to_string(err));
  }

  static FinishReason classify_finish(const std::string& finish_reason,
                                      const nlohmann::json& stop_reason,
                                      const GenerationRequest& request,
                                      std::string& matched) {
    if (finish_reason == "length") return FinishReason::kLength;
    if (stop_reason.is_string()) {
      auto s = stop_reason.get<std::string>();
      for (const auto& stop : request.stop) {
        if (stop == s) {
          matched = s;
          return FinishReason::kStopSequence;
        }
      }
    }
    return FinishReason::kEndOfSequence;
  }

  static void fill_usage(GenerationResult& r, const nlohmann::json& usage,
                         const GenerationRequest& request) {
    if (usage.is_object() && usage.contains("completion_tokens")) {
      r.usage.prompt_tokens = usage.value("prompt_tokens", int64_t{0});
      r.usage.completion_tokens = usage.value("completion_tokens", int64_t{0});
      r.usage.estimated = false;
    } else {
      r.usage.prompt_tokens = text::estimate_tokens(request.context());
      r.usage.completion_tokens = text::estimate_tokens(r.text);
      r.usage.estimated = true;
    }
  }

  static std::string choice_text(const nlohmann::json& choice) {
    if (choice.contains("text") && choice["text"].is_string()) {
      return choice["text"].get<std::string>();
    }
    for (const char* key : {"delta", "message"}) {
      if (choice.contains(key) && choice[key].is_object()) {
        const auto& c = choice[key];
        if (c.contains("content") && c["content"].is_string()) {
          return c["content"].get<std::string>();
        }
      }
    }
    return {};
  }

  GenerationResult attempt_plain(const GenerationRequest& request) {
    httplib::Client cli(url_.origin);
    configure(cli);
    const auto started = Clock::now();
    auto res = cli.Post(endpoint(), auth_headers(),
                        request_body(request, false).dump(),
                        "application/json");
    if (!res) throw transport_error(res.error(), started);
    if (res->status != 200) {
      throw BackendError(BackendError::Kind::kHttpStatus,
                         "backend returned HTTP " + std::to_string(res->status),
                         res->status);
    }
    nlohmann::json body = nlohmann::json::parse(res->body, nullptr, false);
    if (body.is_discarded() || !body.contains("choices") ||
        !body["choices"].is_array() || body["choices"].empty()) {
      throw BackendError(BackendError::Kind::kMalformedResponse,
                         "backend response has no choices");
    }
    const auto& choice = body["choices"][0];
    GenerationResult r;
    r.finished = Clock::now();
    StopMatcher matcher(request.stop);
    std::string raw = choice_text(choice);
    r.text = matcher.feed(raw);
    r.text += matcher.finish();
    if (!r.text.empty()) r.first_token = r.finished;
    if (matcher.stopped()) {
      r.finish = FinishReason::kStopSequence;
      r.matched_stop = matcher.matched();
    } else {
      std::string fr = choice.value("finish_reason", std::string{});
      if (choice.contains("finish_reason") && !choice["finish_reason"].is_string()) {
        fr.clear();
      }
      r.finish = classify_finish(
          fr, choice.contains("stop_reason") ? choice["stop_reason"] : nullptr,
          request, r.matched_stop);
    }
    fill_usage(r, body.contains("usage") ? body["usage"] : nlohmann::json(),
               request);
    return r;
  }

  GenerationResult attempt_stream(const GenerationRequest& request,
                                  const StreamSink& sink, bool& delivered) {
    httplib::Client cli(url_.origin);
    configure(cli);
    const auto started = Clock::now();

    GenerationResult r;
    StopMatcher matcher(request.stop);
    std::string buffer;
    std::string error_body;
    std::string finish_reason;
    nlohmann::json stop_reason;
    nlohmann::json usage;
    int status = 0;
    bool done = false;
    bool malformed = false;
    int64_t chunks = 0;

    auto emit = [&](std::string delta) {
      if (delta.empty()) return;
      auto now = Clock::now();
      if (!r.first_token) r.first_token = now;
      r.text += delta;
      delivered = true;
      sink(StreamEvent{std::move(delta), now, chunks});
    };

    auto handle_event = [&](std::string_view data) {
      if (data == "[DONE]") {
        done = true;
        return;
      }
      auto j = nlohmann::json::parse(data, nullptr, false);
      if (j.is_discarded() || !j.is_object()) {
        malformed = true;
        return;
      }
      if (j.contains("usage") && j["usage"].is_object()) usage = j["usage"];
      if (!j.contains("choices") || !j["choices"].is_array() ||
          j["choices"].empty()) {
        return;
      }
      const auto& choice = j["choices"][0];
      std::string delta = choice_text(choice);
      if (!delta.empty()) ++chunks;
      emit(matcher.feed(delta));
      if (choice.contains("finish_reason") &&
          choice["finish_reason"].is_string()) {
        finish_reason = choice["finish_reason"].get<std::string>();
      }
      if (choice.contains("stop_reason")) stop_reason = choice["stop_reason"];
    };

    httplib::Request req;
    req.method = "POST";
    req.path = endpoint();
    req.headers = auth_headers();
    req.headers.emplace("Accept", "text/event-stream");
    req.set_header("Content-Type", "application/json");
    req.body = request_body(request, true).dump();
    req.response_handler = [&](const httplib::Response& res) {
      status = res.status;
      return true;
    };
    req.content_receiver = [&](const char* data, size_t len, uint64_t,
                               uint64_t) {
      if (status != 200) {
        error_body.append(data, len);
        return true;
      }
      buffer.append(data, len);
      for (;;) {
        size_t sep = buffer.find("\n\n");
        size_t sep_len = 2;
        if (size_t crlf = buffer.find("\r\n\r\n"); crlf < sep) {
          sep = crlf;
          sep_len = 4;
        }
        if (sep == std::string::npos) break;
        std::string event = buffer.substr(0, sep);
        buffer.erase(0, sep + sep_len);
        std::string payload;
        for (const auto& line : text::split_lines(event)) {
          std::string_view l = line;
          if (!l.starts_with("data:")) continue;
          l.remove_prefix(5);
          if (l.starts_with(' ')) l.remove_prefix(1);
          if (!payload.empty()) payload.push_back('\n');
          payload.append(l);
        }
        if (!payload.empty()) handle_event(payload);
        if (done || malformed || matcher.stopped()) return false;
      }
      return true;
    };

    httplib::Response res;
    httplib::Error err = httplib::Error::Success;
    cli.send(req, res, err);

    const bool cancelled_by_us = done || malformed || matcher.stopped();
    if (status != 0 && status != 200) {
      throw BackendError(BackendError::Kind::kHttpStatus,
                         "backend returned HTTP " + std::to_string(status),
                         status);
    }
    if (malformed) {
      throw BackendError(BackendError::Kind::kMalformedResponse,
                         "malformed stream event", 0, r.text);
    }
    if (err != httplib::Error::Success && !cancelled_by_us) {
      if (status == 0 && !delivered) throw transport_error(err, started);
      BackendError te = transport_error(err, started);
      if (te.kind() == BackendError::Kind::kTimeout && !delivered) throw te;
      throw BackendError(BackendError::Kind::kStreamInterrupted,
                         std::string("stream interrupted: ") + te.what(), 0,
                         r.text);
    }
    if (!done && !matcher.stopped() && finish_reason.empty()) {
      throw BackendError(BackendError::Kind::kStreamInterrupted,
                         "stream ended without a finish marker", 0, r.text);
    }

    emit(matcher.finish());
    r.finished = Clock::now();
    if (matcher.stopped()) {
      r.finish = FinishReason::kStopSequence;
      r.matched_stop = matcher.matched();
      usage = nullptr;  // the server's count covers text we discarded
    } else {
      r.finish = classify_finish(finish_reason, stop_reason, request,
                                 r.matched_stop);
    }
    fill_usage(r, usage, request);
    return r;
  }

  BackendConfig config_;
  detail::SplitUrl url_;
  InFlightLimiter limiter_;
};

}  // namespace turnwise
