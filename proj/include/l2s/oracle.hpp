// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "l2s/error.hpp"
#include "l2s/mdp.hpp"
#include "l2s/policy.hpp"
#include "l2s/rng.hpp"
#include "l2s/state_space.hpp"

namespace l2s {

/// Exact optimal values on an enumerated task. `policy` breaks ties toward
/// the lowest token index (within 1e-12).
struct DpSolution {
  std::shared_ptr<const StateSpace> space;
  std::vector<double> v;
  std::vector<double> q;
  std::vector<Token> policy;

  double q_at(std::size_t node, Token a) const {
    return q[node * static_cast<std::size_t>(space->vocab_size()) + static_cast<std::size_t>(a)];
  }
  double value(const State& s) const { return v[space->index(s)]; }
  Token action(const State& s) const { return policy[space->index(s)]; }
  /// V* at the initial state of dataset prompt i.
  double initial_value(std::size_t prompt_index) const { return v[space->root(prompt_index)]; }
};

/// V and Q of a fixed policy on an enumerated task.
struct PolicyEvaluation {
  std::shared_ptr<const StateSpace> space;
  std::vector<double> v;
  std::vector<double> q;
  std::vector<double> initial;  // per dataset prompt
  double mean_initial = 0.0;    // under the prompt distribution

  double q_at(std::size_t node, Token a) const {
    return q[node * static_cast<std::size_t>(space->vocab_size()) + static_cast<std::size_t>(a)];
  }
  double advantage(std::size_t node, Token a) const { return q_at(node, a) - v[node]; }
};

namespace detail {

inline std::vector<double> prompt_weights(const PromptDataset& dataset) {
  std::vector<double> w = dataset.weights.empty() ? std::vector<double>(dataset.size(), 1.0) : dataset.weights;
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

/// Immediate reward of every (node, action), row-major.
inline std::vector<double> reward_table(const StateSpace& space, const TaskSpec& task) {
  const std::size_t v = static_cast<std::size_t>(space.vocab_size());
  std::vector<double> r(space.size() * v);
  for (std::size_t i = 0; i < space.size(); ++i) {
    const State& s = space.state(i);
    for (Token a = 0; a < space.vocab_size(); ++a) {
      r[i * v + static_cast<std::size_t>(a)] = task.reward(s, a, transition(s, a, task));
    }
  }
  return r;
}

inline std::vector<std::vector<double>> policy_table(const Policy& policy, const StateSpace& space) {
  std::vector<std::vector<double>> out(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) out[i] = policy.distribution(space.state(i));
  return out;
}

}  // namespace detail

inline DpSolution dp_solve(const TaskSpec& task, std::shared_ptr<const StateSpace> space) {
  const std::size_t n = space->size();
  const std::size_t nv = static_cast<std::size_t>(task.vocab_size);
  DpSolution sol{space, std::vector<double>(n, 0.0), detail::reward_table(*space, task), std::vector<Token>(n, 0)};
  for (std::size_t i = n; i-- > 0;) {
    double best = -std::numeric_limits<double>::infinity();
    for (Token a = 0; a < task.vocab_size; ++a) {
      const std::int64_t c = space->child(i, a);
      double& q = sol.q[i * nv + static_cast<std::size_t>(a)];
      if (c != StateSpace::terminal) q += sol.v[static_cast<std::size_t>(c)];
      best = std::max(best, q);
    }
    sol.v[i] = best;
    for (Token a = 0; a < task.vocab_size; ++a) {
      if (sol.q[i * nv + static_cast<std::size_t>(a)] >= best - 1e-12) {
        sol.policy[i] = a;
        break;
      }
    }
  }
  return sol;
}

inline DpSolution dp_solve(const TaskSpec& task, std::size_t budget = StateSpace::default_budget) {
  return dp_solve(task, std::make_shared<const StateSpace>(task, budget));
}

inline PolicyEvaluation policy_value_exact(const Policy& policy, const TaskSpec& task,
                                           std::shared_ptr<const StateSpace> space) {
  const std::size_t n = space->size();
  const std::size_t nv = static_cast<std::size_t>(task.vocab_size);
  PolicyEvaluation out{space, std::vector<double>(n, 0.0), detail::reward_table(*space, task), {}, 0.0};
  for (std::size_t i = n; i-- > 0;) {
    const auto pi = policy.distribution(space->state(i));
    double v = 0.0;
    for (Token a = 0; a < task.vocab_size; ++a) {
      const std::int64_t c = space->child(i, a);
      double& q = out.q[i * nv + static_cast<std::size_t>(a)];
      if (c != StateSpace::terminal) q += out.v[static_cast<std::size_t>(c)];
      v += pi[static_cast<std::size_t>(a)] * q;
    }
    out.v[i] = v;
  }
  const auto w = detail::prompt_weights(task.dataset);
  for (std::size_t p = 0; p < task.dataset.size(); ++p) {
    out.initial.push_back(out.v[space->root(p)]);
    out.mean_initial += w[p] * out.initial.back();
  }
  return out;
}

inline PolicyEvaluation policy_value_exact(const Policy& policy, const TaskSpec& task,
                                           std::size_t budget = StateSpace::default_budget) {
  return policy_value_exact(policy, task, std::make_shared<const StateSpace>(task, budget));
}

/// Average state visitation over the episode, one entry per enumerated state.
/// Normalized by the expected episode length (equal to H without early
/// termination), so it sums to one.
inline std::vector<double> visitation_exact(const Policy& policy, const TaskSpec& task, const StateSpace& space) {
  std::vector<double> mass(space.size(), 0.0);
  const auto w = detail::prompt_weights(task.dataset);
  for (std::size_t p = 0; p < task.dataset.size(); ++p) mass[space.root(p)] += w[p];
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (mass[i] == 0.0) continue;
    const auto pi = policy.distribution(space.state(i));
    for (Token a = 0; a < task.vocab_size; ++a) {
      const std::int64_t c = space.child(i, a);
      if (c != StateSpace::terminal) mass[static_cast<std::size_t>(c)] += mass[i] * pi[static_cast<std::size_t>(a)];
    }
  }
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  for (double& m : mass) m /= total;
  return mass;
}

inline std::vector<double> visitation_exact(const Policy& policy, const TaskSpec& task,
                                            std::size_t budget = StateSpace::default_budget) {
  return visitation_exact(policy, task, StateSpace(task, budget));
}

/// Bellman residual max_s |V*(s) - max_a [r + V*(s a)]|, recomputed from the
/// task's reward independently of the stored Q table.
inline double bellman_residual(const DpSolution& sol, const TaskSpec& task) {
  double worst = 0.0;
  for (std::size_t i = 0; i < sol.space->size(); ++i) {
    const State& s = sol.space->state(i);
    double best = -std::numeric_limits<double>::infinity();
    for (Token a = 0; a < task.vocab_size; ++a) {
      const State next = transition(s, a, task);
      const std::int64_t c = sol.space->child(i, a);
      best = std::max(best, task.reward(s, a, next) + (c == StateSpace::terminal ? 0.0 : sol.v[static_cast<std::size_t>(c)]));
    }
    worst = std::max(worst, std::abs(sol.v[i] - best));
  }
  return worst;
}

struct McEvaluation {
  double mean = 0.0;
  /// Standard error of the mean; absent for a single rollout.
  std::optional<double> standard_error;
  std::vector<double> per_prompt;
  std::size_t rollouts = 0;
};

/// Raw return of one episode of `policy` from `start`.
inline double episode_return(const Policy& policy, const State& start, const TaskSpec& task, Rng& rng,
                             bool greedy = false) {
  State s = start;
  double total = 0.0;
  while (!is_terminal(s, task)) {
    const Token a = greedy ? policy.greedy(s) : policy.sample(s, rng);
    State next = transition(s, a, task);
    total += task.reward(s, a, next);
    s = std::move(next);
  }
  return total;
}

/// n rollouts per dataset prompt.
inline McEvaluation mc_evaluate(const Policy& policy, const TaskSpec& task, const PromptDataset& dataset,
                                std::size_t n, Rng& rng, bool greedy = false) {
  if (n == 0) throw Error(ErrorKind::invalid_argument, "mc_evaluate needs n >= 1");
  McEvaluation out;
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& prompt : dataset.prompts) {
    double prompt_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double g = episode_return(policy, initial_state(prompt), task, rng, greedy);
      prompt_sum += g;
      sum += g;
      sum_sq += g * g;
    }
    out.per_prompt.push_back(prompt_sum / static_cast<double>(n));
  }
  out.rollouts = n * dataset.size();
  const double count = static_cast<double>(out.rollouts);
  out.mean = sum / count;
  if (out.rollouts > 1) {
    const double var = std::max(0.0, (sum_sq - count * out.mean * out.mean) / (count - 1.0));
    out.standard_error = std::sqrt(var / count);
  }
  return out;
}

inline McEvaluation mc_evaluate(const Policy& policy, const TaskSpec& task, std::size_t n, Rng& rng,
                                bool greedy = false) {
  return mc_evaluate(policy, task, task.dataset, n, rng, greedy);
}

struct DifficultyBuckets {
  std::vector<std::string> labels;
  /// Bucket index per prompt.
  std::vector<std::size_t> assignment;
  std::vector<std::vector<std::size_t>> members;

  std::vector<double> bucket_means(const std::vector<double>& per_prompt) const {
    std::vector<double> out;
    for (const auto& m : members) {
      double s = 0.0;
      for (std::size_t i : m) s += per_prompt[i];
      out.push_back(m.empty() ? 0.0 : s / static_cast<double>(m.size()));
    }
    return out;
  }

  /// Mean of the easiest bucket minus mean of the hardest.
  double gap(const std::vector<double>& per_prompt) const {
    const auto means = bucket_means(per_prompt);
    return means.front() - means.back();
  }
};

inline std::vector<std::string> bucket_labels(std::size_t k) {
  if (k == 2) return {"easy", "hard"};
  if (k == 3) return {"easy", "medium", "hard"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back("bucket" + std::to_string(i));
  return out;
}

/// Quantile split by descending score (easy first); ties keep prompt order.
/// The first n mod k buckets get one extra prompt.
inline DifficultyBuckets difficulty_buckets(const std::vector<double>& scores, std::size_t k) {
  if (k == 0 || scores.size() < k) {
    throw Error(ErrorKind::invalid_argument, "need at least as many prompts as buckets");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  DifficultyBuckets out{bucket_labels(k), std::vector<std::size_t>(scores.size()), std::vector<std::vector<std::size_t>>(k)};
  const std::size_t base = scores.size() / k, extra = scores.size() % k;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < k; ++b) {
    const std::size_t count = base + (b < extra ? 1 : 0);
    for (std::size_t j = 0; j < count; ++j, ++pos) {
      out.assignment[order[pos]] = b;
      out.members[b].push_back(order[pos]);
    }
  }
  return out;
}

struct ChiSquareResult {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
};

/// Pearson goodness-of-fit. Cells with expected count below `min_expected`
/// are pooled into one cell (dropped if the pool itself is still too small).
inline ChiSquareResult chi_square_test(const std::vector<double>& observed_counts,
                                       const std::vector<double>& expected_probs, double min_expected = 5.0) {
  if (observed_counts.size() != expected_probs.size()) {
    throw Error(ErrorKind::length_mismatch, "observed and expected sizes differ");
  }
  const double n = std::accumulate(observed_counts.begin(), observed_counts.end(), 0.0);
  std::vector<std::pair<double, double>> cells;
  double pool_obs = 0.0, pool_exp = 0.0;
  for (std::size_t i = 0; i < observed_counts.size(); ++i) {
    const double e = expected_probs[i] * n;
    if (e < min_expected) {
      pool_obs += observed_counts[i];
      pool_exp += e;
    } else {
      cells.emplace_back(observed_counts[i], e);
    }
  }
  if (pool_exp >= min_expected) cells.emplace_back(pool_obs, pool_exp);
  ChiSquareResult out;
  if (cells.size() < 2) return out;
  for (const auto& [o, e] : cells) out.statistic += (o - e) * (o - e) / e;
  out.dof = cells.size() - 1;
  boost::math::chi_squared dist(static_cast<double>(out.dof));
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  return out;
}

namespace detail {
inline void write_tokens(std::ostream& out, const std::vector<Token>& tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) out << (i ? " " : "") << tokens[i];
}
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}
}  // namespace detail

/// One row per state, in enumeration order:
///   <prompt tokens> | <generated tokens> \t V \t Q_0 ... Q_{|V|-1} \t pi*
inline void export_dp_solution(std::ostream& out, const DpSolution& sol) {
  out << "# l2s-dp-solution v1 states=" << sol.space->size() << " vocab=" << sol.space->vocab_size()
      << " horizon=" << sol.space->horizon() << "\n";
  for (std::size_t i = 0; i < sol.space->size(); ++i) {
    const State& s = sol.space->state(i);
    detail::write_tokens(out, s.prompt);
    out << " | ";
    detail::write_tokens(out, s.generated);
    out << '\t' << detail::format_double(sol.v[i]);
    for (Token a = 0; a < sol.space->vocab_size(); ++a) out << '\t' << detail::format_double(sol.q_at(i, a));
    out << '\t' << sol.policy[i] << '\n';
  }
}

}  // namespace l2s
