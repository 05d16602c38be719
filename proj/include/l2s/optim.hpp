// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "l2s/error.hpp"

namespace l2s {

struct AdamConfig {
  double learning_rate = 0.05;
  /// Plain gradient descent (moments unused).
  bool sgd = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam on a flat parameter vector. `step` takes the gradient of a loss to
/// be minimized.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  const AdamConfig& config() const { return cfg_; }
  long steps() const { return t_; }

  void step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
      throw Error(ErrorKind::length_mismatch, "optimizer size does not match parameters");
    }
    ++t_;
    if (cfg_.sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg_.learning_rate * grad[i];
      return;
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (grad[i] == 0.0 && m_[i] == 0.0 && v_[i] == 0.0) continue;
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      params[i] -= cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.epsilon);
    }
  }

  void reset() {
    t_ = 0;
    std::fill(m_.begin(), m_.end(), 0.0);
    std::fill(v_.begin(), v_.end(), 0.0);
  }

  /// Text state: step count then the two moment vectors.
  void serialize(std::ostream& out) const {
    char buf[32];
    out << t_ << ' ' << m_.size() << '\n';
    for (const auto* vec : {&m_, &v_}) {
      for (double x : *vec) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        out << buf << '\n';
      }
    }
  }

  void deserialize(std::istream& in) {
    std::size_t n = 0;
    if (!(in >> t_ >> n) || n != m_.size()) throw Error(ErrorKind::io, "corrupt optimizer state");
    for (auto* vec : {&m_, &v_}) {
      for (double& x : *vec) {
        if (!(in >> x)) throw Error(ErrorKind::io, "corrupt optimizer state");
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace l2s
