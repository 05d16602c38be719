// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "l2s/error.hpp"
#include "l2s/mdp.hpp"
#include "l2s/policy.hpp"

namespace l2s {

struct Demonstration {
  State state;
  Token action;
};

struct BcConfig {
  double learning_rate = 1.0;
  int epochs = 50;
};

inline double mean_log_likelihood(const SoftmaxPolicy& policy, std::span<const Demonstration> demos) {
  double ll = 0.0;
  for (const auto& d : demos) ll += policy.log_prob(d.state, d.action);
  return ll / static_cast<double>(demos.size());
}

/// Full-batch gradient ascent on the mean log-likelihood of the
/// demonstrations. Returns the training log-likelihood after each epoch.
inline std::vector<double> bc_update(SoftmaxPolicy& learner, std::span<const Demonstration> demos,
                                     const BcConfig& cfg) {
  if (demos.empty()) throw Error(ErrorKind::invalid_argument, "behavior cloning needs demonstrations");
  std::vector<double> curve;
  std::vector<double> grad(learner.num_params());
  const double scale = 1.0 / static_cast<double>(demos.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& d : demos) learner.accumulate_log_prob_grad(d.state, d.action, scale, grad);
    auto& theta = learner.params();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += cfg.learning_rate * grad[i];
    curve.push_back(mean_log_likelihood(learner, demos));
  }
  return curve;
}

}  // namespace l2s
