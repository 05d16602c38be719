// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "l2s/error.hpp"
#include "l2s/features.hpp"
#include "l2s/mdp.hpp"
#include "l2s/rng.hpp"

namespace l2s {

enum class PolicyKind { tabular, linear_softmax, scripted, frozen_snapshot, black_box };

inline const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::tabular: return "tabular";
    case PolicyKind::linear_softmax: return "linear_softmax";
    case PolicyKind::scripted: return "scripted";
    case PolicyKind::frozen_snapshot: return "frozen_snapshot";
    case PolicyKind::black_box: return "black_box";
  }
  return "unknown";
}

/// Numerically stable softmax.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  const double top = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& x : out) {
    x = std::exp(x - top);
    total += x;
  }
  for (double& x : out) x /= total;
  return out;
}

inline double log_softmax_at(std::span<const double> logits, std::size_t i) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double x : logits) total += std::exp(x - top);
  return logits[i] - top - std::log(total);
}

/// Inverse-CDF draw: one uniform per call.
inline Token sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return static_cast<Token>(i);
  }
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return static_cast<Token>(i);
  }
  return 0;
}

inline Token argmax_token(std::span<const double> values) {
  return static_cast<Token>(std::max_element(values.begin(), values.end()) - values.begin());
}

/// Stochastic policy over tokens. Every policy can sample; all but
/// sampling-only (black-box) policies expose their distribution.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual PolicyKind kind() const = 0;
  virtual int vocab_size() const = 0;
  virtual bool has_distribution() const { return true; }
  virtual std::vector<double> distribution(const State& s) const = 0;
  virtual Token sample(const State& s, Rng& rng) const { return sample_categorical(distribution(s), rng); }

  /// Greedy argmax decoding (evaluation only).
  virtual Token greedy(const State& s) const { return argmax_token(distribution(s)); }
};

using PolicyPtr = std::shared_ptr<const Policy>;

struct LogProbGrad {
  double log_prob;
  std::vector<double> gradient;
};

/// Softmax over logits linear in the parameters:
///   logit(s, a) = sum_j phi_j(s) * theta[j * |V| + a].
/// With tabular features this is one free logit vector per state.
class SoftmaxPolicy final : public Policy {
 public:
  SoftmaxPolicy(std::shared_ptr<const FeatureMap> features, int vocab_size)
      : features_(std::move(features)),
        vocab_(vocab_size),
        theta_(features_->dim() * static_cast<std::size_t>(vocab_size), 0.0) {}

  PolicyKind kind() const override {
    return features_->config().kind == FeatureConfig::Kind::tabular ? PolicyKind::tabular
                                                                    : PolicyKind::linear_softmax;
  }
  int vocab_size() const override { return vocab_; }

  const FeatureMap& features() const { return *features_; }
  std::shared_ptr<const FeatureMap> features_ptr() const { return features_; }
  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }
  std::size_t num_params() const { return theta_.size(); }

  std::vector<double> logits(const FeatureVector& phi) const {
    std::vector<double> out(static_cast<std::size_t>(vocab_), 0.0);
    const std::size_t v = static_cast<std::size_t>(vocab_);
    for (const auto& f : phi) {
      const double* row = theta_.data() + f.index * v;
      for (std::size_t a = 0; a < v; ++a) out[a] += f.value * row[a];
    }
    return out;
  }
  std::vector<double> logits(const State& s) const { return logits(features_->features(s)); }

  std::vector<double> distribution(const State& s) const override { return softmax(logits(s)); }

  double log_prob(const State& s, Token a) const {
    const auto z = logits(s);
    return log_softmax_at(z, static_cast<std::size_t>(a));
  }

  /// log pi(a|s) and its gradient phi(s,a) - sum_b pi(b|s) phi(s,b).
  LogProbGrad log_prob_and_grad(const State& s, Token a) const {
    LogProbGrad out{0.0, std::vector<double>(theta_.size(), 0.0)};
    out.log_prob = accumulate_log_prob_grad(s, a, 1.0, out.gradient);
    return out;
  }

  /// grad += scale * d log pi(a|s) / d theta; returns log pi(a|s).
  double accumulate_log_prob_grad(const State& s, Token a, double scale, std::span<double> grad) const {
    const FeatureVector phi = features_->features(s);
    const auto z = logits(phi);
    const auto p = softmax(z);
    std::vector<double> dlogits(p.size());
    for (std::size_t b = 0; b < p.size(); ++b) dlogits[b] = -scale * p[b];
    dlogits[static_cast<std::size_t>(a)] += scale;
    accumulate_logit_grad(phi, dlogits, grad);
    return log_softmax_at(z, static_cast<std::size_t>(a));
  }

  /// grad[j, b] += phi_j * dlogits[b].
  void accumulate_logit_grad(const FeatureVector& phi, std::span<const double> dlogits,
                             std::span<double> grad) const {
    const std::size_t v = static_cast<std::size_t>(vocab_);
    for (const auto& f : phi) {
      double* row = grad.data() + f.index * v;
      for (std::size_t b = 0; b < v; ++b) row[b] += f.value * dlogits[b];
    }
  }

 private:
  std::shared_ptr<const FeatureMap> features_;
  int vocab_;
  std::vector<double> theta_;
};

/// Fixed rule given as an explicit distribution per state.
class ScriptedPolicy final : public Policy {
 public:
  using Rule = std::function<std::vector<double>(const State&)>;
  ScriptedPolicy(int vocab_size, Rule rule, std::string name = "scripted")
      : vocab_(vocab_size), rule_(std::move(rule)), name_(std::move(name)) {}

  PolicyKind kind() const override { return PolicyKind::scripted; }
  int vocab_size() const override { return vocab_; }
  std::vector<double> distribution(const State& s) const override { return rule_(s); }
  const std::string& name() const { return name_; }

 private:
  int vocab_;
  Rule rule_;
  std::string name_;
};

/// Deep copy of a parametric policy taken at construction; later updates to
/// the source never reach it.
class FrozenSnapshot final : public Policy {
 public:
  explicit FrozenSnapshot(SoftmaxPolicy source) : inner_(std::move(source)) {}

  PolicyKind kind() const override { return PolicyKind::frozen_snapshot; }
  int vocab_size() const override { return inner_.vocab_size(); }
  std::vector<double> distribution(const State& s) const override { return inner_.distribution(s); }
  const SoftmaxPolicy& inner() const { return inner_; }

 private:
  const SoftmaxPolicy inner_;
};

/// Sampling-only policy: no probabilities, no gradients.
class BlackBoxPolicy final : public Policy {
 public:
  using Sampler = std::function<Token(const State&, Rng&)>;
  BlackBoxPolicy(int vocab_size, Sampler sampler) : vocab_(vocab_size), sampler_(std::move(sampler)) {}

  /// Hides everything but sampling of an existing policy.
  static PolicyPtr wrap(PolicyPtr inner) {
    const int v = inner->vocab_size();
    return std::make_shared<const BlackBoxPolicy>(
        v, [inner = std::move(inner)](const State& s, Rng& rng) { return inner->sample(s, rng); });
  }

  PolicyKind kind() const override { return PolicyKind::black_box; }
  int vocab_size() const override { return vocab_; }
  bool has_distribution() const override { return false; }
  std::vector<double> distribution(const State&) const override {
    throw Error(ErrorKind::non_differentiable_policy, "black-box policy exposes sampling only");
  }
  Token sample(const State& s, Rng& rng) const override { return sampler_(s, rng); }
  Token greedy(const State&) const override {
    throw Error(ErrorKind::non_differentiable_policy, "black-box policy has no greedy decoding");
  }

 private:
  int vocab_;
  Sampler sampler_;
};

inline const SoftmaxPolicy& as_differentiable(const Policy& policy) {
  if (auto* p = dynamic_cast<const SoftmaxPolicy*>(&policy)) return *p;
  throw Error(ErrorKind::non_differentiable_policy,
              std::string("policy kind ") + to_string(policy.kind()) + " has no gradient");
}

inline LogProbGrad log_prob_and_grad(const Policy& policy, const State& s, Token a) {
  return as_differentiable(policy).log_prob_and_grad(s, a);
}

inline double log_prob(const Policy& policy, const State& s, Token a) {
  if (auto* p = dynamic_cast<const SoftmaxPolicy*>(&policy)) return p->log_prob(s, a);
  const auto d = policy.distribution(s);
  return std::log(d[static_cast<std::size_t>(a)]);
}

inline std::vector<double> action_distribution(const Policy& policy, const State& s) {
  return policy.distribution(s);
}

inline Token sample_action(const Policy& policy, const State& s, Rng& rng) { return policy.sample(s, rng); }

/// Sum_a p(a|s) (log p(a|s) - log q(a|s)).
inline double kl_divergence(const Policy& p, const Policy& q, const State& s) {
  const auto pd = p.distribution(s);
  const auto qd = q.distribution(s);
  double kl = 0.0;
  for (std::size_t a = 0; a < pd.size(); ++a) {
    if (pd[a] <= 0.0) continue;
    if (qd[a] <= 0.0) {
      throw Error(ErrorKind::support_mismatch, "q assigns zero to token " + std::to_string(a));
    }
    kl += pd[a] * (std::log(pd[a]) - std::log(qd[a]));
  }
  return std::max(0.0, kl);
}

enum class Granularity { per_trajectory, per_step };

/// Rollin mixture: with probability beta the guide acts, otherwise the base.
struct MixtureSpec {
  const Policy* base = nullptr;
  const Policy* guide = nullptr;
  double beta = 0.0;
  Granularity granularity = Granularity::per_trajectory;
};

/// Per-trajectory context of a mixture rollin. Coins are drawn only when
/// 0 < beta < 1, so the degenerate mixtures consume exactly the random
/// stream of the pure policy.
class MixtureRollin {
 public:
  MixtureRollin(const MixtureSpec& spec, Rng& rng) : spec_(spec) {
    if (spec.beta < 0.0 || spec.beta > 1.0) {
      throw Error(ErrorKind::invalid_argument, "mixture beta must lie in [0, 1]");
    }
    if (spec.beta > 0.0 && !spec.guide) throw Error(ErrorKind::missing_guide, "mixture with beta > 0");
    if (spec.granularity == Granularity::per_trajectory) use_guide_ = coin(rng);
  }

  struct Choice {
    Token token;
    bool guide;
  };

  /// Which component acts at the next step (draws the per-step coin).
  bool choose_guide(Rng& rng) {
    return spec_.granularity == Granularity::per_trajectory ? use_guide_ : coin(rng);
  }

  Choice sample(const State& s, Rng& rng) {
    const bool guide = choose_guide(rng);
    const Policy& actor = guide ? *spec_.guide : *spec_.base;
    return {actor.sample(s, rng), guide};
  }

  /// Whether the per-trajectory coin selected the guide.
  bool guide_selected() const { return use_guide_; }

 private:
  bool coin(Rng& rng) const {
    if (spec_.beta <= 0.0) return false;
    if (spec_.beta >= 1.0) return true;
    return rng.bernoulli(spec_.beta);
  }

  MixtureSpec spec_;
  bool use_guide_ = false;
};

inline Token mixture_sample(MixtureRollin& context, const State& s, Rng& rng) {
  return context.sample(s, rng).token;
}

}  // namespace l2s
