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
 * Backend abstraction for text generation.
 *
 * A request carries the user prompt and an assistant prefix (the part of the
 * response generated so far, including any forced text). Completion-style
 * backends see the concatenation; chat-style backends see a user message and
 * a partial assistant message to continue.
 *
 * Stop sequences are applied on the client side as well as being sent to the
 * server, so callers always get text truncated at the first stop sequence
 * with the stop text excluded.
 */

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "turnwise/text.hpp"

namespace turnwise {

using Clock = std::chrono::steady_clock;

inline double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

enum class FinishReason {
  kStopSequence,   // a requested stop sequence was produced
  kEndOfSequence,  // the model ended on its own
  kLength,         // max_tokens reached
};

inline const char* to_string(FinishReason r) {
  switch (r) {
    case FinishReason::kStopSequence: return "stop";
    case FinishReason::kEndOfSequence: return "eos";
    case FinishReason::kLength: return "length";
  }
  return "unknown";
}

struct Usage {
  int64_t prompt_tokens = 0;
  int64_t completion_tokens = 0;
  bool estimated = false;  // backend omitted usage; whitespace-piece estimate
};

struct GenerationRequest {
  std::string prompt;
  std::string assistant_prefix;
  std::vector<std::string> stop;
  int max_tokens = 32768;
  double temperature = 0.6;
  double top_p = 0.95;
  bool stream = false;
  std::optional<uint64_t> seed;

  std::string context() const { return prompt + assistant_prefix; }

  void validate() const {
    if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
    if (temperature < 0.0) {
      throw std::invalid_argument("temperature must be >= 0");
    }
    if (!(top_p > 0.0 && top_p <= 1.0)) {
      throw std::invalid_argument("top_p must be in (0, 1]");
    }
  }
};

struct GenerationResult {
  std::string text;
  FinishReason finish = FinishReason::kEndOfSequence;
  std::string matched_stop;
  Usage usage;
  int retries = 0;
  Clock::time_point started;
  Clock::time_point finished;
  std::optional<Clock::time_point> first_token;
};

struct StreamEvent {
  std::string delta;
  Clock::time_point timestamp;
  int64_t cumulative_tokens = 0;
};

using StreamSink = std::function<void(const StreamEvent&)>;

class BackendError : public std::runtime_error {
 public:
  enum class Kind {
    kTimeout,
    kHttpStatus,
    kMalformedResponse,
    kConnection,
    kStreamInterrupted,
  };

  BackendError(Kind kind, const std::string& message, int status = 0,
               std::string partial_text = {}, int retries = 0)
      : std::runtime_error(message), kind_(kind), status_(status),
        partial_text_(std::move(partial_text)), retries_(retries) {}

  Kind kind() const { return kind_; }
  int status() const { return status_; }
  const std::string& partial_text() const { return partial_text_; }
  int retries() const { return retries_; }

 private:
  Kind kind_;
  int status_;
  std::string partial_text_;
  int retries_;
};

inline const char* to_string(BackendError::Kind k) {
  switch (k) {
    case BackendError::Kind::kTimeout: return "timeout";
    case BackendError::Kind::kHttpStatus: return "http_status";
    case BackendError::Kind::kMalformedResponse: return "malformed_response";
    case BackendError::Kind::kConnection: return "connection";
    case BackendError::Kind::kStreamInterrupted: return "stream_interrupted";
  }
  return "unknown";
}

class Backend {
 public:
  virtual ~Backend() = default;

  virtual GenerationResult generate(const GenerationRequest& request) = 0;

  // Delivers deltas in order; the returned result equals what generate()
  // would return for the same backend behaviour.
  virtual GenerationResult generate_stream(const GenerationRequest& request,
                                           const StreamSink& sink) = 0;

  virtual bool reachable() { return true; }
};

// Re-requests with `forced_text` appended to the assistant prefix. The forced
// text is context, not output, so it never counts toward completion tokens.
inline GenerationResult continue_with_forced_suffix(
    Backend& backend, GenerationRequest request, std::string_view forced_text,
    const StreamSink& sink = nullptr) {
  request.assistant_prefix.append(forced_text);
  if (sink) {
    request.stream = true;
    return backend.generate_stream(request, sink);
  }
  return backend.generate(request);
}

// Incremental stop-sequence detection over a stream of deltas. Text that
// could still turn into a stop sequence is held back until disambiguated.
class StopMatcher {
 public:
  explicit StopMatcher(std::vector<std::string> stops) : stops_(std::move(stops)) {
    std::erase_if(stops_, [](const std::string& s) { return s.empty(); });
  }

  // Returns text that is now safe to deliver. After a stop is found, further
  // input is ignored.
  std::string feed(std::string_view delta) {
    if (stopped_) return {};
    pending_.append(delta);
    size_t best = std::string::npos;
    for (const auto& s : stops_) {
      size_t pos = pending_.find(s);
      if (pos < best) {
        best = pos;
        matched_ = s;
      }
    }
    if (best != std::string::npos) {
      stopped_ = true;
      std::string out = pending_.substr(0, best);
      emitted_.append(out);
      pending_.clear();
      return out;
    }
    size_t keep = holdback();
    std::string out = pending_.substr(0, pending_.size() - keep);
    pending_.erase(0, pending_.size() - keep);
    emitted_.append(out);
    return out;
  }

  // Flushes any held-back text at end of stream.
  std::string finish() {
    std::string out;
    if (!stopped_) out = std::move(pending_);
    pending_.clear();
    emitted_.append(out);
    return out;
  }

  bool stopped() const { return stopped_; }
  const std::string& matched() const { return matched_; }
  const std::string& emitted() const { return emitted_; }

 private:
  size_t holdback() const {
    size_t keep = 0;
    for (const auto& s : stops_) {
      size_t max_len = std::min(s.size() - 1, pending_.size());
      for (size_t len = max_len; len > keep; --len) {
        if (std::string_view(pending_).substr(pending_.size() - len) ==
            std::string_view(s).substr(0, len)) {
          keep = len;
          break;
        }
      }
    }
    return keep;
  }

  std::vector<std::string> stops_;
  std::string pending_;
  std::string emitted_;
  std::string matched_;
  bool stopped_ = false;
};

// Counting limiter bounding concurrent backend requests. Shared by every
// session using one client.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit) : limit_(limit < 1 ? 1 : limit) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      --in_flight_;
    }
    cv_.notify_one();
  }

  int in_flight() const {
    std::lock_guard lock(mu_);
    return in_flight_;
  }

  int peak() const {
    std::lock_guard lock(mu_);
    return peak_;
  }

  int limit() const { return limit_; }

  class Guard {
   public:
    explicit Guard(InFlightLimiter& l) : l_(&l) { l_->acquire(); }
    ~Guard() {
      if (l_) l_->release();
    }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    InFlightLimiter* l_;
  };

 private:
  const int limit_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  int peak_ = 0;
};

}  // namespace turnwise
