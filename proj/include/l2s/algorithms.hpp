// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "l2s/bc.hpp"
#include "l2s/error.hpp"
#include "l2s/mdp.hpp"
#include "l2s/optim.hpp"
#include "l2s/oracle.hpp"
#include "l2s/policy.hpp"
#include "l2s/rng.hpp"
#include "l2s/rollin.hpp"
#include "l2s/tasks.hpp"
#include "l2s/value.hpp"

namespace l2s {

enum class Mode { bc, ppo, ppo_plus, aggrevated, lols, d2lols };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::bc: return "bc";
    case Mode::ppo: return "ppo";
    case Mode::ppo_plus: return "ppo_plus";
    case Mode::aggrevated: return "aggrevated";
    case Mode::lols: return "lols";
    case Mode::d2lols: return "d2lols";
  }
  return "unknown";
}

inline Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::bc, Mode::ppo, Mode::ppo_plus, Mode::aggrevated, Mode::lols, Mode::d2lols}) {
    if (name == to_string(m)) return m;
  }
  throw Error(ErrorKind::invalid_mode, "unknown mode '" + name + "'");
}

enum class GuideValueMode { fitted, monte_carlo };

struct PpoConfig {
  double clip = 0.2;
  int epochs = 4;
  std::size_t minibatch = 64;
  double learning_rate = 0.02;
  double value_coeff = 0.5;
  double entropy_coeff = 0.0;
  bool normalize_advantages = false;
  /// "adam" or "sgd".
  std::string optimizer = "adam";
};

struct AlgoConfig {
  Mode mode = Mode::ppo;
  int iterations = 100;
  /// Mixing parameter of the single-path modes. Unset means the mode
  /// default: ppo_plus_beta for ppo_plus, aggrevated_beta for aggrevated.
  std::optional<double> beta;
  /// Weight of the guide in the learner-advantage rollin.
  double ppo_plus_beta = 0.2;
  /// Weight of the learner in the guide-advantage rollin.
  double aggrevated_beta = 0.8;
  /// lols: weight of the learner-advantage loss. d2lols: fraction of
  /// iterations spent in the guide-advantage phase. Unset means 0.8 / 0.2.
  std::optional<double> alpha;
  Granularity granularity = Granularity::per_trajectory;
  PpoConfig ppo;
  GaeConfig gae;
  KlConfig kl;
  std::size_t rollins_per_iteration = 32;
  int restarts_per_rollin = 1;
  int guide_mc_rollouts = 1;
  DeviationMode deviation = DeviationMode::rollout_policy;
  GuideValueMode guide_value = GuideValueMode::fitted;
  bool importance_correction = false;
  ValueFitConfig guide_value_fit;
  BcConfig bc{1.0, 1};
  std::size_t bc_demonstrations = 256;
  /// Learner-visited states per iteration for the class-error diagnostic
  /// (0 disables it).
  std::size_t eps_class_states = 0;
  int eps_class_mc = 4;
  int workers = 1;

  double effective_alpha() const {
    if (alpha) return *alpha;
    return mode == Mode::d2lols ? 0.2 : 0.8;
  }
  double effective_ppo_plus_beta() const { return mode == Mode::ppo_plus && beta ? *beta : ppo_plus_beta; }
  double effective_aggrevated_beta() const { return mode == Mode::aggrevated && beta ? *beta : aggrevated_beta; }
  /// Iterations of the guide-advantage phase in d2lols.
  int switch_iteration() const { return static_cast<int>(std::lround(effective_alpha() * iterations)); }

  void validate() const {
    auto unit = [](double x, const char* what) {
      if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorKind::invalid_argument, std::string(what) + " must lie in [0, 1]");
    };
    if (iterations < 1) throw Error(ErrorKind::invalid_argument, "iterations must be >= 1");
    if (!(ppo.clip > 0.0)) throw Error(ErrorKind::invalid_argument, "clip must be > 0");
    if (ppo.epochs < 1 || ppo.minibatch < 1) throw Error(ErrorKind::invalid_argument, "ppo epochs and minibatch must be >= 1");
    if (beta) unit(*beta, "beta");
    unit(ppo_plus_beta, "ppo_plus_beta");
    unit(aggrevated_beta, "aggrevated_beta");
    unit(effective_alpha(), "alpha");
    if (rollins_per_iteration < 1) throw Error(ErrorKind::invalid_argument, "rollins_per_iteration must be >= 1");
    if (restarts_per_rollin < 1 || guide_mc_rollouts < 1 || eps_class_mc < 1) {
      throw Error(ErrorKind::invalid_argument, "rollout counts must be >= 1");
    }
    if (workers < 1) throw Error(ErrorKind::invalid_argument, "workers must be >= 1");
  }
};

struct IterationStats {
  int iteration = 0;
  std::string phase;
  double mean_return = 0.0;
  double shaped_return = 0.0;
  double rollin_return = 0.0;
  double kl = 0.0;
  double beta_kl = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double entropy = 0.0;
  double initial_ratio_deviation = 0.0;
  std::size_t entries = 0;
  std::optional<double> eps_class;
  std::optional<double> eps_class_se;
  bool eps_class_upper_bound = false;
  double wall_time = 0.0;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  double entropy = 0.0;
  /// max |rho - 1| over the first minibatch of the update.
  double initial_ratio_deviation = 0.0;
};

struct WeightedBatch {
  const AdvantageBatch* batch = nullptr;
  double weight = 1.0;
};

/// Contribution of one entry to the clipped surrogate and the coefficient
/// multiplying grad log pi(a|s).
struct SurrogateTerm {
  double objective = 0.0;
  double coefficient = 0.0;
  bool clipped = false;
};

inline SurrogateTerm clipped_surrogate(double ratio, double advantage, double clip) {
  const double unclipped = ratio * advantage;
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage;
  if (unclipped <= clipped) return {unclipped, unclipped, false};
  return {clipped, 0.0, true};
}

namespace detail {

inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
}

}  // namespace detail

/// Minibatch ascent on the weighted sum of clipped-surrogate objectives, with
/// the learner value regressed on learner-source batches. Every batch is split
/// into the same number of minibatches per epoch so each step sees all of them.
inline UpdateStats ppo_update(SoftmaxPolicy& learner, ValueFunction* value, Adam& policy_opt, Adam* value_opt,
                              std::span<const WeightedBatch> batches, const PpoConfig& cfg, Rng& rng) {
  UpdateStats stats;
  std::vector<std::vector<double>> advantages;
  std::size_t chunks = 0;
  for (const auto& wb : batches) {
    std::vector<double> adv;
    for (const auto& e : wb.batch->entries) adv.push_back(e.advantage * e.importance);
    if (cfg.normalize_advantages && adv.size() > 1) normalize_advantages(adv);
    chunks = std::max(chunks, (adv.size() + cfg.minibatch - 1) / cfg.minibatch);
    advantages.push_back(std::move(adv));
  }
  if (chunks == 0) return stats;

  const std::size_t nv = static_cast<std::size_t>(learner.vocab_size());
  std::vector<double> grad(learner.num_params());
  std::vector<double> vgrad(value ? value->params().size() : 0);
  std::vector<double> dlogits(nv);
  FeatureVector phi;
  std::size_t terms = 0, clipped = 0, value_terms = 0;
  bool first_chunk = true;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::vector<std::size_t>> order;
    for (const auto& wb : batches) {
      std::vector<std::size_t> idx(wb.batch->entries.size());
      std::iota(idx.begin(), idx.end(), 0);
      detail::shuffle_indices(idx, rng);
      order.push_back(std::move(idx));
    }
    for (std::size_t k = 0; k < chunks; ++k) {
      std::fill(grad.begin(), grad.end(), 0.0);
      std::fill(vgrad.begin(), vgrad.end(), 0.0);
      double loss = 0.0, vloss = 0.0;
      bool value_step = false;
      for (std::size_t b = 0; b < batches.size(); ++b) {
        const auto& entries = batches[b].batch->entries;
        const std::size_t n = entries.size();
        const std::size_t begin = k * n / chunks, end = (k + 1) * n / chunks;
        if (begin == end) continue;
        const double scale = batches[b].weight / static_cast<double>(end - begin);
        const bool fit_value = value && batches[b].batch->source == AdvantageSource::learner;
        for (std::size_t j = begin; j < end; ++j) {
          const std::size_t i = order[b][j];
          const auto& e = entries[i];
          learner.features().features(e.state, phi);
          const auto z = learner.logits(phi);
          const auto p = softmax(z);
          const double logp = log_softmax_at(z, static_cast<std::size_t>(e.action));
          const double ratio = std::exp(logp - e.old_log_prob);
          if (first_chunk) stats.initial_ratio_deviation = std::max(stats.initial_ratio_deviation, std::abs(ratio - 1.0));
          const auto term = clipped_surrogate(ratio, advantages[b][i], cfg.clip);
          double entropy = 0.0;
          for (double q : p) {
            if (q > 0.0) entropy -= q * std::log(q);
          }
          loss -= scale * (term.objective + cfg.entropy_coeff * entropy);
          stats.entropy += entropy;
          ++terms;
          clipped += term.clipped ? 1 : 0;
          // Loss gradient with respect to the logits.
          for (std::size_t a = 0; a < nv; ++a) {
            const double dlogp = (a == static_cast<std::size_t>(e.action) ? 1.0 : 0.0) - p[a];
            const double dent = p[a] > 0.0 ? -p[a] * (std::log(p[a]) + entropy) : 0.0;
            dlogits[a] = -scale * (term.coefficient * dlogp + cfg.entropy_coeff * dent);
          }
          learner.accumulate_logit_grad(phi, dlogits, grad);
          if (fit_value) {
            const double err = value->value(phi) - e.value_target;
            const double vscale = cfg.value_coeff * 2.0 / static_cast<double>(end - begin);
            for (const auto& f : phi) vgrad[f.index] += vscale * err * f.value;
            vloss += err * err;
            stats.value_loss += err * err;
            ++value_terms;
            value_step = true;
          }
        }
      }
      first_chunk = false;
      if (!std::isfinite(loss) || !std::isfinite(vloss)) {
        throw Error(ErrorKind::non_finite_loss, "non-finite loss in the policy update");
      }
      stats.policy_loss += loss;
      policy_opt.step(learner.params(), grad);
      if (value_step && value_opt) value_opt->step(value->params(), vgrad);
    }
  }
  stats.policy_loss /= static_cast<double>(chunks * static_cast<std::size_t>(cfg.epochs));
  stats.clip_fraction = terms ? static_cast<double>(clipped) / static_cast<double>(terms) : 0.0;
  stats.entropy = terms ? stats.entropy / static_cast<double>(terms) : 0.0;
  stats.value_loss = value_terms ? stats.value_loss / static_cast<double>(value_terms) : 0.0;
  return stats;
}

inline UpdateStats ppo_update(SoftmaxPolicy& learner, ValueFunction* value, Adam& policy_opt, Adam* value_opt,
                              const AdvantageBatch& batch, const PpoConfig& cfg, Rng& rng) {
  const WeightedBatch wb{&batch, 1.0};
  return ppo_update(learner, value, policy_opt, value_opt, std::span<const WeightedBatch>(&wb, 1), cfg, rng);
}

// Class-error diagnostics.

struct EpsClassEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  /// Set when the greedy surrogate only bounds the class maximum from above.
  bool upper_bound = false;
  std::vector<double> per_state;
};

namespace detail {

inline EpsClassEstimate mean_and_se(const std::vector<double>& xs) {
  EpsClassEstimate out;
  if (xs.empty()) return out;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) out.value += x;
  out.value /= n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.value) * (x - out.value);
    out.standard_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

}  // namespace detail

/// Mean over `states` of max_a A^g(s, a), with Q^g(s, a) from `mc` guide
/// rollouts per action and V^g(s) from `mc` independent guide rollouts.
inline EpsClassEstimate estimate_eps_class(std::span<const State> states, const Policy& guide, const TaskSpec& task,
                                           Rng& rng, int mc, bool tabular_class = true) {
  if (mc < 1) throw Error(ErrorKind::invalid_argument, "need at least one Monte-Carlo rollout");
  std::vector<double> per_state;
  for (const auto& s : states) {
    double v = 0.0;
    for (int k = 0; k < mc; ++k) v += action_return(guide, s, guide.sample(s, rng), task, rng);
    v /= mc;
    double best = -std::numeric_limits<double>::infinity();
    for (Token a = 0; a < task.vocab_size; ++a) {
      double q = 0.0;
      for (int k = 0; k < mc; ++k) q += action_return(guide, s, a, task, rng);
      best = std::max(best, q / mc - v);
    }
    per_state.push_back(best);
  }
  auto out = detail::mean_and_se(per_state);
  out.upper_bound = !tabular_class;
  out.per_state = std::move(per_state);
  return out;
}

/// Exact counterpart from an enumerated evaluation of the guide.
inline EpsClassEstimate estimate_eps_class(std::span<const State> states, const PolicyEvaluation& guide_eval,
                                           bool tabular_class = true) {
  std::vector<double> per_state;
  const int nv = guide_eval.space->vocab_size();
  for (const auto& s : states) {
    const std::size_t node = guide_eval.space->index(s);
    double best = -std::numeric_limits<double>::infinity();
    for (Token a = 0; a < nv; ++a) best = std::max(best, guide_eval.advantage(node, a));
    per_state.push_back(best);
  }
  auto out = detail::mean_and_se(per_state);
  out.upper_bound = !tabular_class;
  out.per_state = std::move(per_state);
  return out;
}

/// Average regret (1/T)(max_c sum_t loss[t][c] - sum_t own[t]) where
/// loss[t][c] is iteration t's surrogate evaluated at comparator c, and own[t]
/// is the value at the iterate actually played.
inline double estimate_eps_regret(std::span<const double> own, const std::vector<std::vector<double>>& comparators) {
  if (own.empty()) return 0.0;
  double own_total = 0.0;
  for (double x : own) own_total += x;
  double best = own_total;
  const std::size_t n = comparators.empty() ? 0 : comparators.front().size();
  for (std::size_t c = 0; c < n; ++c) {
    double total = 0.0;
    for (std::size_t t = 0; t < own.size(); ++t) total += comparators.at(t).at(c);
    best = std::max(best, total);
  }
  return (best - own_total) / static_cast<double>(own.size());
}

/// Exact regret of a sequence of tabular iterates against the guide's
/// advantage. The surrogate of iteration t at policy p is
/// sum_s d^{pi_t}(s) sum_a p(a|s) A^g(s, a). Comparators: every iterate and the
/// per-state greedy policy, which is the maximizer over the tabular class.
inline double eps_regret_exact(std::span<const PolicyPtr> iterates, const PolicyEvaluation& guide_eval,
                               const TaskSpec& task) {
  const auto& space = *guide_eval.space;
  const std::size_t nv = static_cast<std::size_t>(task.vocab_size);
  const std::size_t T = iterates.size();
  std::vector<std::vector<double>> dist(T);
  for (std::size_t k = 0; k < T; ++k) {
    dist[k].reserve(space.size() * nv);
    for (std::size_t i = 0; i < space.size(); ++i) {
      for (double p : iterates[k]->distribution(space.state(i))) dist[k].push_back(p);
    }
  }
  std::vector<double> own(T);
  std::vector<std::vector<double>> comps(T, std::vector<double>(T + 1, 0.0));
  std::vector<double> weighted_adv(space.size() * nv, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto d = visitation_exact(*iterates[t], task, space);
    for (std::size_t i = 0; i < space.size(); ++i) {
      if (d[i] == 0.0) continue;
      for (std::size_t a = 0; a < nv; ++a) {
        const double adv = d[i] * guide_eval.advantage(i, static_cast<Token>(a));
        weighted_adv[i * nv + a] += adv;
        for (std::size_t k = 0; k < T; ++k) comps[t][k] += dist[k][i * nv + a] * adv;
      }
    }
    own[t] = comps[t][t];
  }
  // The greedy comparator's total is added to the last row.
  double greedy = 0.0;
  for (std::size_t i = 0; i < space.size(); ++i) {
    greedy += *std::max_element(weighted_adv.begin() + static_cast<std::ptrdiff_t>(i * nv),
                                weighted_adv.begin() + static_cast<std::ptrdiff_t>((i + 1) * nv));
  }
  if (T > 0) comps[T - 1][T] = greedy;
  return estimate_eps_regret(own, comps);
}

/// Stateful driver for one training run. Holds everything a checkpoint needs.
class Trainer {
 public:
  /// `space` (optional) enables exact class-error diagnostics when the guide
  /// exposes its distribution.
  Trainer(AlgoConfig cfg, TaskSpec task, SoftmaxPolicy learner, PolicyPtr guide, std::uint64_t seed,
          std::shared_ptr<const StateSpace> space = nullptr)
      : cfg_(std::move(cfg)),
        task_(std::move(task)),
        learner_(std::move(learner)),
        reference_(std::make_shared<const FrozenSnapshot>(learner_)),
        guide_(std::move(guide)),
        learner_value_(learner_.features_ptr()),
        guide_value_(learner_.features_ptr()),
        policy_opt_(learner_.num_params(), AdamConfig{cfg_.ppo.learning_rate, cfg_.ppo.optimizer == "sgd"}),
        value_opt_(learner_value_.params().size(), AdamConfig{cfg_.ppo.learning_rate, cfg_.ppo.optimizer == "sgd"}),
        rollin_rng_(Rng::stream(seed, "rollin")),
        update_rng_(Rng::stream(seed, "update")),
        diag_rng_(Rng::stream(seed, "diag")),
        beta_kl_(cfg_.kl.beta_kl) {
    cfg_.validate();
    validate_dataset(task_.dataset, task_.vocab_size);
    if (cfg_.mode != Mode::ppo && !guide_) {
      throw Error(ErrorKind::missing_guide, std::string("mode ") + to_string(cfg_.mode) + " needs a guide");
    }
    if (cfg_.mode == Mode::bc) {
      Rng demo_rng = Rng::stream(seed, "demos");
      demos_ = collect_demonstrations(*guide_, task_, cfg_.bc_demonstrations, demo_rng);
    }
    if (space && guide_ && guide_->has_distribution() && cfg_.eps_class_states > 0) {
      guide_eval_ = policy_value_exact(*guide_, task_, std::move(space));
    }
  }

  const AlgoConfig& config() const { return cfg_; }
  const TaskSpec& task() const { return task_; }
  const SoftmaxPolicy& learner() const { return learner_; }
  SoftmaxPolicy& learner() { return learner_; }
  const PolicyPtr& guide() const { return guide_; }
  const Policy& reference() const { return *reference_; }
  const ValueFunction& learner_value() const { return learner_value_; }
  const ValueFunction& guide_value() const { return guide_value_; }
  int iteration() const { return iteration_; }
  bool done() const { return iteration_ >= cfg_.iterations; }
  double beta_kl() const { return beta_kl_; }

  /// Algorithm that iteration `t` runs (d2lols switches phase).
  Mode phase(int t) const {
    if (cfg_.mode != Mode::d2lols) return cfg_.mode;
    return t < cfg_.switch_iteration() ? Mode::aggrevated : Mode::ppo_plus;
  }

  IterationStats step() {
    if (done()) throw Error(ErrorKind::invalid_argument, "training already finished");
    const auto start = std::chrono::steady_clock::now();
    const Mode mode = phase(iteration_);
    if (cfg_.mode == Mode::d2lols && iteration_ > 0 && iteration_ == cfg_.switch_iteration()) {
      // Fresh learner value and optimizers for the second phase.
      std::fill(learner_value_.params().begin(), learner_value_.params().end(), 0.0);
      policy_opt_.reset();
      value_opt_.reset();
    }
    IterationStats stats;
    stats.iteration = iteration_;
    stats.phase = to_string(mode);
    stats.beta_kl = beta_kl_;
    const bool aggrevated_phase = cfg_.mode == Mode::d2lols && mode == Mode::aggrevated;
    switch (mode) {
      case Mode::bc: bc_step(stats); break;
      case Mode::ppo: learner_step(stats, 0.0); break;
      case Mode::ppo_plus: learner_step(stats, cfg_.mode == Mode::d2lols ? cfg_.ppo_plus_beta : cfg_.effective_ppo_plus_beta()); break;
      case Mode::aggrevated:
        guide_step(stats, aggrevated_phase ? cfg_.aggrevated_beta : cfg_.effective_aggrevated_beta());
        break;
      case Mode::lols: lols_step(stats); break;
      case Mode::d2lols: break;
    }
    if (cfg_.kl.adaptive && (iteration_ + 1) % std::max(1, cfg_.kl.horizon_n) == 0) {
      KlConfig kl = cfg_.kl;
      kl.beta_kl = beta_kl_;
      beta_kl_ = adapt_kl_coeff(kl, stats.kl);
    }
    if (cfg_.eps_class_states > 0 && guide_) class_error(stats);
    ++iteration_;
    stats.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return stats;
  }

  std::vector<IterationStats> run() {
    std::vector<IterationStats> log;
    while (!done()) log.push_back(step());
    return log;
  }

  /// Full mutable state as text (parameters at full precision).
  void save_state(std::ostream& out) const {
    out << "l2s-trainer-state v1\n" << iteration_ << '\n';
    write_doubles(out, std::vector<double>{beta_kl_, eps_sum_, eps_sumsq_, eps_count_});
    write_doubles(out, learner_.params());
    write_doubles(out, learner_value_.params());
    write_doubles(out, guide_value_.params());
    policy_opt_.serialize(out);
    value_opt_.serialize(out);
    for (const Rng* r : {&rollin_rng_, &update_rng_, &diag_rng_}) out << r->serialize() << '\n';
  }

  void load_state(std::istream& in) {
    std::string header;
    std::getline(in, header);
    if (header != "l2s-trainer-state v1") throw Error(ErrorKind::schema_version, "unsupported trainer state: " + header);
    if (!(in >> iteration_)) throw Error(ErrorKind::io, "corrupt trainer state");
    std::vector<double> scalars(4);
    read_doubles(in, scalars);
    beta_kl_ = scalars[0];
    eps_sum_ = scalars[1];
    eps_sumsq_ = scalars[2];
    eps_count_ = scalars[3];
    read_doubles(in, learner_.params());
    read_doubles(in, learner_value_.params());
    read_doubles(in, guide_value_.params());
    policy_opt_.deserialize(in);
    value_opt_.deserialize(in);
    in >> std::ws;
    for (Rng* r : {&rollin_rng_, &update_rng_, &diag_rng_}) {
      std::string line;
      if (!std::getline(in, line)) throw Error(ErrorKind::io, "corrupt trainer state");
      r->deserialize(line);
    }
  }

 private:
  static void write_doubles(std::ostream& out, std::span<const double> xs) {
    char buf[32];
    out << xs.size() << '\n';
    for (double x : xs) {
      std::snprintf(buf, sizeof buf, "%.17g", x);
      out << buf << '\n';
    }
  }

  static void read_doubles(std::istream& in, std::span<double> xs) {
    std::size_t n = 0;
    if (!(in >> n) || n != xs.size()) throw Error(ErrorKind::io, "trainer state size mismatch");
    for (double& x : xs) {
      std::string tok;
      if (!(in >> tok)) throw Error(ErrorKind::io, "corrupt trainer state");
      x = std::strtod(tok.c_str(), nullptr);
    }
  }

  RollConfig roll_config(AdvantageSource source, double guide_weight) const {
    RollConfig rc;
    rc.rollin_guide_weight = guide_weight;
    rc.granularity = cfg_.granularity;
    rc.source = source;
    rc.deviation = cfg_.deviation;
    rc.restarts_per_rollin = cfg_.restarts_per_rollin;
    rc.guide_mc_rollouts = cfg_.guide_mc_rollouts;
    rc.mc_guide_value = cfg_.guide_value == GuideValueMode::monte_carlo;
    rc.importance_correction = cfg_.importance_correction;
    rc.gae = cfg_.gae;
    rc.beta_kl = beta_kl_;
    rc.workers = cfg_.workers;
    return rc;
  }

  std::vector<State> draw_prompts() {
    std::vector<State> prompts;
    for (std::size_t i = 0; i < cfg_.rollins_per_iteration; ++i) prompts.push_back(sample_prompt(task_.dataset, rollin_rng_));
    return prompts;
  }

  AdvantageBatch learner_batch(std::span<const State> prompts, double guide_weight) {
    return collect_batch(roll_config(AdvantageSource::learner, guide_weight), learner_, &learner_value_,
                         guide_.get(), nullptr, reference_.get(), task_, prompts, rollin_rng_);
  }

  AdvantageBatch guide_batch(std::span<const State> prompts, double learner_weight) {
    auto batch = collect_batch(roll_config(AdvantageSource::guide, 1.0 - learner_weight), learner_, nullptr,
                               guide_.get(), &guide_value_, reference_.get(), task_, prompts, rollin_rng_);
    if (cfg_.guide_value == GuideValueMode::fitted && !batch.value_samples.empty()) {
      fit_value(guide_value_, batch.value_samples, cfg_.guide_value_fit);
      refresh_guide_advantages(batch, guide_value_);
    }
    return batch;
  }

  static void fill(IterationStats& stats, const AdvantageBatch& batch, const UpdateStats& up) {
    stats.mean_return = batch.stats.mean_return;
    stats.shaped_return = batch.stats.shaped_return;
    stats.rollin_return = batch.stats.rollin_return;
    stats.kl = batch.stats.mean_kl;
    stats.entries = batch.entries.size();
    stats.policy_loss = up.policy_loss;
    stats.value_loss = up.value_loss;
    stats.clip_fraction = up.clip_fraction;
    stats.entropy = up.entropy;
    stats.initial_ratio_deviation = up.initial_ratio_deviation;
  }

  void learner_step(IterationStats& stats, double guide_weight) {
    const auto prompts = draw_prompts();
    const auto batch = learner_batch(prompts, guide_weight);
    const auto up = ppo_update(learner_, &learner_value_, policy_opt_, &value_opt_, batch, cfg_.ppo, update_rng_);
    fill(stats, batch, up);
  }

  void guide_step(IterationStats& stats, double learner_weight) {
    const auto prompts = draw_prompts();
    const auto batch = guide_batch(prompts, learner_weight);
    const auto up = ppo_update(learner_, nullptr, policy_opt_, nullptr, batch, cfg_.ppo, update_rng_);
    fill(stats, batch, up);
  }

  void lols_step(IterationStats& stats) {
    const double alpha = cfg_.effective_alpha();
    const auto prompts = draw_prompts();
    const auto lb = learner_batch(prompts, cfg_.ppo_plus_beta);
    const auto gb = guide_batch(prompts, cfg_.aggrevated_beta);
    const WeightedBatch parts[] = {{&lb, alpha}, {&gb, 1.0 - alpha}};
    const auto up = ppo_update(learner_, &learner_value_, policy_opt_, &value_opt_, parts, cfg_.ppo, update_rng_);
    fill(stats, lb, up);
    stats.entries += gb.entries.size();
  }

  void bc_step(IterationStats& stats) {
    const auto curve = bc_update(learner_, demos_, cfg_.bc);
    // Returns are measured on fresh learner rollins.
    const auto prompts = draw_prompts();
    RollConfig rc = roll_config(AdvantageSource::learner, 0.0);
    rc.beta_kl = 0.0;
    const auto batch = collect_batch(rc, learner_, nullptr, nullptr, nullptr, nullptr, task_, prompts, rollin_rng_);
    fill(stats, batch, UpdateStats{});
    stats.policy_loss = curve.empty() ? 0.0 : -curve.back();
  }

  void class_error(IterationStats& stats) {
    std::vector<State> states;
    for (std::size_t k = 0; k < cfg_.eps_class_states; ++k) {
      const State prompt = sample_prompt(task_.dataset, diag_rng_);
      const Trajectory traj = collect_rollin(learner_, learner_, prompt, task_, diag_rng_);
      states.push_back(sample_restart(traj, diag_rng_, 1).front());
    }
    const bool tabular = learner_.kind() == PolicyKind::tabular;
    const auto est = guide_eval_ ? estimate_eps_class(states, *guide_eval_, tabular)
                                 : estimate_eps_class(states, *guide_, task_, diag_rng_, cfg_.eps_class_mc, tabular);
    // Running estimate over every state sampled so far.
    for (double x : est.per_state) {
      eps_sum_ += x;
      eps_sumsq_ += x * x;
      eps_count_ += 1.0;
    }
    const double mean = eps_sum_ / eps_count_;
    const double var = eps_count_ > 1.0 ? std::max(0.0, (eps_sumsq_ - eps_count_ * mean * mean) / (eps_count_ - 1.0)) : 0.0;
    stats.eps_class = mean;
    stats.eps_class_se = std::sqrt(var / eps_count_);
    stats.eps_class_upper_bound = est.upper_bound;
  }

  AlgoConfig cfg_;
  TaskSpec task_;
  SoftmaxPolicy learner_;
  PolicyPtr reference_;
  PolicyPtr guide_;
  ValueFunction learner_value_;
  ValueFunction guide_value_;
  Adam policy_opt_;
  Adam value_opt_;
  Rng rollin_rng_;
  Rng update_rng_;
  Rng diag_rng_;
  double beta_kl_;
  int iteration_ = 0;
  double eps_sum_ = 0.0, eps_sumsq_ = 0.0, eps_count_ = 0.0;
  std::vector<Demonstration> demos_;
  std::optional<PolicyEvaluation> guide_eval_;
};

struct RunResult {
  SoftmaxPolicy policy;
  std::vector<IterationStats> log;
};

inline RunResult run_algorithm(const AlgoConfig& cfg, const TaskSpec& task, SoftmaxPolicy learner, PolicyPtr guide,
                               std::uint64_t seed) {
  Trainer trainer(cfg, task, std::move(learner), std::move(guide), seed);
  auto log = trainer.run();
  return {trainer.learner(), std::move(log)};
}

}  // namespace l2s
