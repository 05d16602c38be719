// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "l2s/error.hpp"
#include "l2s/features.hpp"
#include "l2s/mdp.hpp"
#include "l2s/policy.hpp"

namespace l2s {

/// State-value function linear in the shared features.
class ValueFunction {
 public:
  explicit ValueFunction(std::shared_ptr<const FeatureMap> features)
      : features_(std::move(features)), weights_(features_->dim(), 0.0) {}

  const FeatureMap& features() const { return *features_; }
  std::shared_ptr<const FeatureMap> features_ptr() const { return features_; }
  std::vector<double>& params() { return weights_; }
  const std::vector<double>& params() const { return weights_; }
  bool tabular() const { return features_->config().kind == FeatureConfig::Kind::tabular; }

  double value(const FeatureVector& phi) const {
    double v = 0.0;
    for (const auto& f : phi) v += f.value * weights_[f.index];
    return v;
  }
  double value(const State& s) const { return value(features_->features(s)); }

  /// Value of `s`, with terminal states pinned to zero.
  double value_or_terminal(const State& s, const TaskSpec& task) const {
    return is_terminal(s, task) ? 0.0 : value(s);
  }

 private:
  std::shared_ptr<const FeatureMap> features_;
  std::vector<double> weights_;
};

struct GaeConfig {
  double gamma = 0.99;
  double lambda = 0.95;
};

struct KlConfig {
  double beta_kl = 0.1;
  double target_kl = 0.5;
  bool adaptive = false;
  /// Iterations between coefficient updates.
  int horizon_n = 1;
};

/// r_t - beta_kl * (log pi(a_t|s_t) - log pi_0(a_t|s_t)), per step.
inline std::vector<double> shaped_rewards(const Trajectory& traj, const Policy& learner, const Policy& reference,
                                          const KlConfig& kl) {
  std::vector<double> out;
  out.reserve(traj.size());
  if (kl.beta_kl == 0.0) {
    for (const auto& step : traj.steps) out.push_back(step.raw_reward);
    return out;
  }
  if (!reference.has_distribution()) {
    throw Error(ErrorKind::reference_unscorable, "reference policy is sampling-only");
  }
  if (!learner.has_distribution()) {
    throw Error(ErrorKind::reference_unscorable, "learner policy is sampling-only");
  }
  for (const auto& step : traj.steps) {
    const double ratio = log_prob(learner, step.state, step.action) - log_prob(reference, step.state, step.action);
    out.push_back(step.raw_reward - kl.beta_kl * ratio);
  }
  return out;
}

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> value_targets;
};

/// A_t = delta_t + gamma*lambda*A_{t+1}, delta_t = r_t + gamma V(s_{t+1}) - V(s_t).
/// `values` holds V(s_0..s_T); its last entry is the bootstrap value (0 at
/// termination).
inline GaeResult gae_advantages(std::span<const double> rewards, std::span<const double> values,
                                const GaeConfig& cfg) {
  if (values.size() != rewards.size() + 1) {
    throw Error(ErrorKind::length_mismatch, "need one more value than rewards");
  }
  const std::size_t n = rewards.size();
  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double delta = rewards[t] + cfg.gamma * values[t + 1] - values[t];
    next_adv = delta + cfg.gamma * cfg.lambda * next_adv;
    out.advantages[t] = next_adv;
    out.value_targets[t] = next_adv + values[t];
  }
  return out;
}

/// In-place standardization with a 1e-8 floor on the standard deviation.
inline void normalize_advantages(std::span<double> adv) {
  if (adv.empty()) return;
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(adv.size())), 1e-8);
  for (double& a : adv) a = (a - mean) / sd;
}

struct ValueSample {
  State state;
  double target;
};

struct ValueFitConfig {
  double learning_rate = 0.1;
  int epochs = 1;
  /// Tabular only: set each visited state to the mean of its targets.
  bool closed_form = false;
};

inline double value_mse(const ValueFunction& value, std::span<const ValueSample> batch) {
  if (batch.empty()) return 0.0;
  double loss = 0.0;
  for (const auto& s : batch) {
    const double err = value.value(s.state) - s.target;
    loss += err * err;
  }
  return loss / static_cast<double>(batch.size());
}

/// Sequential stochastic gradient descent on 0.5 * (V(s) - target)^2 over the
/// batch, `epochs` passes in batch order. Returns the post-update mean squared
/// error.
inline double fit_value(ValueFunction& value, std::span<const ValueSample> batch, const ValueFitConfig& cfg) {
  if (batch.empty()) throw Error(ErrorKind::invalid_argument, "value fit needs a non-empty batch");
  if (cfg.closed_form) {
    if (!value.tabular()) throw Error(ErrorKind::invalid_argument, "closed-form fit is tabular only");
    std::map<std::size_t, std::pair<double, int>> sums;
    FeatureVector phi;
    for (const auto& s : batch) {
      value.features().features(s.state, phi);
      auto& [sum, count] = sums[phi.front().index];
      sum += s.target;
      ++count;
    }
    for (const auto& [index, acc] : sums) value.params()[index] = acc.first / acc.second;
    return value_mse(value, batch);
  }
  FeatureVector phi;
  auto& w = value.params();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& s : batch) {
      value.features().features(s.state, phi);
      const double err = value.value(phi) - s.target;
      for (const auto& f : phi) w[f.index] -= cfg.learning_rate * err * f.value;
    }
  }
  return value_mse(value, batch);
}

/// Proportional controller on the observed mean per-token KL.
inline double adapt_kl_coeff(const KlConfig& kl, double observed_kl) {
  if (!kl.adaptive) return kl.beta_kl;
  const double error = std::clamp((observed_kl - kl.target_kl) / kl.target_kl, -0.2, 0.2);
  return std::max(0.0, kl.beta_kl * (1.0 + 0.1 * error));
}

}  // namespace l2s
