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
 * Group-relative policy optimization math over caller-supplied rollouts.
 *
 * Advantages are group-standardized rewards,
 *
 *   A_i = (R_i - mean(R)) / std(R)         (population std)
 *
 * and the clipped surrogate objective is
 *
 *   J = 1/G * sum_i 1/|o_i| * sum_j min(rho_ij * A_i,
 *                                       clip(rho_ij, 1-eps, 1+eps) * A_i)
 *
 * without a KL penalty. The 1/|o_i| factor gives every token of a short
 * rollout a larger share of the update than a token of a long one with the
 * same advantage.
 */

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace turnwise::grpo {

inline constexpr double kDegenerateStd = 1e-12;

class GrpoError : public std::invalid_argument {
 public:
  enum class Kind { kGroupTooSmall, kEmptyGroup, kNonPositiveRatio, kBadConfig };

  GrpoError(Kind kind, const char* what)
      : std::invalid_argument(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct GroupSample {
  std::vector<double> token_ratios;  // rho_ij, one per output token
  double reward = 0.0;

  size_t length() const { return token_ratios.size(); }
};

struct GrpoConfig {
  double epsilon = 0.2;
  int group_size = 0;  // 0: take the sample count
  // Reserved: a KL penalty is not part of the objective and stays off.
  bool kl_penalty = false;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
      throw GrpoError(GrpoError::Kind::kBadConfig, "epsilon must be in (0, 1)");
    }
    if (group_size != 0 && group_size < 2) {
      throw GrpoError(GrpoError::Kind::kBadConfig, "group size must be >= 2");
    }
    if (kl_penalty) {
      throw GrpoError(GrpoError::Kind::kBadConfig,
                      "KL penalty is not supported");
    }
  }
};

// Standardized advantages. A group whose population std is below 1e-12
// carries no preference signal and gets all-zero advantages.
inline std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw GrpoError(GrpoError::Kind::kGroupTooSmall,
                    "group needs at least two rewards");
  }
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double correction = 0.0;  // second pass absorbs rounding in the mean
  for (double r : rewards) correction += r - mean;
  mean += correction / n;

  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / n);

  std::vector<double> adv(rewards.size(), 0.0);
  if (std_dev < kDegenerateStd) return adv;
  for (size_t i = 0; i < rewards.size(); ++i) {
    adv[i] = (rewards[i] - mean) / std_dev;
  }
  return adv;
}

inline std::vector<double> group_advantages(const std::vector<double>& rewards) {
  return group_advantages(std::span<const double>(rewards));
}

inline double clipped_surrogate(double ratio, double advantage,
                                double epsilon) {
  double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

inline void check_samples(std::span<const GroupSample> samples) {
  if (samples.empty()) {
    throw GrpoError(GrpoError::Kind::kEmptyGroup, "group has no samples");
  }
  for (const auto& s : samples) {
    if (s.token_ratios.empty()) {
      throw GrpoError(GrpoError::Kind::kEmptyGroup, "sample has no tokens");
    }
    for (double rho : s.token_ratios) {
      if (!(rho > 0.0) || !std::isfinite(rho)) {
        throw GrpoError(GrpoError::Kind::kNonPositiveRatio,
                        "token ratio must be finite and positive");
      }
    }
  }
}

// Objective with explicit per-sample advantages.
inline double grpo_objective(std::span<const GroupSample> samples,
                             std::span<const double> advantages,
                             const GrpoConfig& config) {
  config.validate();
  check_samples(samples);
  if (advantages.size() != samples.size()) {
    throw std::invalid_argument("one advantage per sample required");
  }
  double total = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& ratios = samples[i].token_ratios;
    double sample_sum = 0.0;
    for (double rho : ratios) {
      sample_sum += clipped_surrogate(rho, advantages[i], config.epsilon);
    }
    total += sample_sum / static_cast<double>(ratios.size());
  }
  return total / static_cast<double>(samples.size());
}

// Objective with advantages standardized from the samples' rewards.
inline double grpo_objective(std::span<const GroupSample> samples,
                             const GrpoConfig& config) {
  config.validate();
  check_samples(samples);
  if (config.group_size != 0 &&
      samples.size() != static_cast<size_t>(config.group_size)) {
    throw std::invalid_argument("sample count must equal group size");
  }
  std::vector<double> rewards;
  rewards.reserve(samples.size());
  for (const auto& s : samples) rewards.push_back(s.reward);
  auto adv = group_advantages(rewards);
  return grpo_objective(samples, adv, config);
}

inline double grpo_objective(const std::vector<GroupSample>& samples,
                             const GrpoConfig& config = {}) {
  return grpo_objective(std::span<const GroupSample>(samples), config);
}

}  // namespace turnwise::grpo
