// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "l2s/bc.hpp"
#include "l2s/error.hpp"
#include "l2s/features.hpp"
#include "l2s/mdp.hpp"
#include "l2s/oracle.hpp"
#include "l2s/policy.hpp"
#include "l2s/rng.hpp"

namespace l2s {

// ---------------------------------------------------------------------------
// Positive continuation: sentiment lexicon plus bigram fluency.

struct PositiveContinuationParams {
  int vocab_size = 6;
  int horizon = 4;
  std::vector<double> lexicon;  // token -> sentiment weight in [-1, 1]
  std::vector<double> bigram;   // row-major, rows sum to 1, entries > 0
  double sentiment_weight = 0.7;
  /// Strength of the sentiment steering in the scripted guide.
  double guide_steering = 1.5;
  PromptDataset dataset;
};

/// Mean log bigram probability of the generated tokens (each conditioned on
/// the preceding context token), affinely mapped so the table's least and
/// most likely entries land on 0 and 1.
inline double bigram_fluency(const State& s, const std::vector<double>& log_bigram, int vocab, double lo, double hi) {
  double total = 0.0;
  int count = 0;
  Token prev = s.prompt.empty() ? -1 : s.prompt.back();
  for (Token t : s.generated) {
    if (prev >= 0) {
      total += log_bigram[static_cast<std::size_t>(prev) * static_cast<std::size_t>(vocab) + static_cast<std::size_t>(t)];
      ++count;
    }
    prev = t;
  }
  if (count == 0 || hi <= lo) return 1.0;
  return (total / count - lo) / (hi - lo);
}

inline TaskSpec make_positive_continuation(const PositiveContinuationParams& p) {
  const std::size_t v = static_cast<std::size_t>(p.vocab_size);
  if (p.lexicon.size() != v) throw Error(ErrorKind::invalid_argument, "lexicon needs one weight per token");
  if (p.bigram.size() != v * v) throw Error(ErrorKind::invalid_argument, "invalid bigram table: wrong size");
  for (double w : p.lexicon) {
    if (!std::isfinite(w)) throw Error(ErrorKind::invalid_argument, "lexicon weights must be finite");
  }
  std::vector<double> log_bigram(v * v);
  for (std::size_t i = 0; i < v; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      const double x = p.bigram[i * v + j];
      if (!(x > 0.0) || !std::isfinite(x)) {
        throw Error(ErrorKind::invalid_argument, "invalid bigram table: entries must be positive");
      }
      row += x;
      log_bigram[i * v + j] = std::log(x);
    }
    if (std::abs(row - 1.0) > 1e-9) {
      throw Error(ErrorKind::invalid_argument, "invalid bigram table: row " + std::to_string(i) + " not normalized");
    }
  }
  const auto [lo_it, hi_it] = std::minmax_element(log_bigram.begin(), log_bigram.end());
  const double lo = *lo_it, hi = *hi_it;

  TaskSpec task;
  task.name = "positive_continuation";
  task.vocab_size = p.vocab_size;
  task.horizon = p.horizon;
  task.dataset = p.dataset;
  validate_dataset(task.dataset, task.vocab_size);
  task.convention = RewardConvention::terminal;
  const double w = p.sentiment_weight;
  const int vocab = p.vocab_size;
  auto lexicon = p.lexicon;
  task.terminal_reward = [=](const State& s) {
    double sentiment = 0.0;
    for (Token t : s.generated) sentiment += lexicon[static_cast<std::size_t>(t)];
    if (!s.generated.empty()) sentiment /= static_cast<double>(s.generated.size());
    return w * sentiment + (1.0 - w) * bigram_fluency(s, log_bigram, vocab, lo, hi);
  };
  task.difficulty = [=](const State& s) {
    double total = 0.0;
    for (Token t : s.prompt) total += lexicon[static_cast<std::size_t>(t)];
    return s.prompt.empty() ? 0.0 : total / static_cast<double>(s.prompt.size());
  };
  const double steer = p.guide_steering;
  task.heuristic_guide = [=](const State& s) {
    std::vector<double> logits(static_cast<std::size_t>(vocab), 0.0);
    const auto last = s.last_token();
    for (int a = 0; a < vocab; ++a) {
      const double lm = last ? log_bigram[static_cast<std::size_t>(*last) * static_cast<std::size_t>(vocab) +
                                          static_cast<std::size_t>(a)]
                             : 0.0;
      logits[static_cast<std::size_t>(a)] = lm + steer * lexicon[static_cast<std::size_t>(a)];
    }
    return softmax(logits);
  };
  task.context_prior = log_bigram;
  task.default_beta_kl = 0.1;
  return task;
}

/// Sentiment-persistent bigram table: tokens of one polarity mostly follow
/// the same polarity. Deterministic in `seed`.
inline std::vector<double> persistent_bigram(const std::vector<double>& lexicon, std::uint64_t seed,
                                             double cross_weight = 0.02) {
  const std::size_t v = lexicon.size();
  Rng rng(seed);
  auto polarity = [](double x) { return x > 0.0 ? 1 : (x < 0.0 ? -1 : 0); };
  std::vector<double> table(v * v);
  for (std::size_t i = 0; i < v; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      const int pi = polarity(lexicon[i]), pj = polarity(lexicon[j]);
      double base = pi == pj ? 1.0 : (pi == 0 || pj == 0 ? 0.3 : cross_weight);
      base *= 0.5 + rng.uniform();
      table[i * v + j] = base;
      row += base;
    }
    for (std::size_t j = 0; j < v; ++j) table[i * v + j] /= row;
  }
  return table;
}

// ---------------------------------------------------------------------------
// Concept coverage: fraction of prompt concepts produced, minus a repetition
// penalty. The prompt tokens are the concept set.

struct ConceptCoverageParams {
  int vocab_size = 6;
  int horizon = 5;
  double repetition_penalty = 0.0;
  std::optional<Token> eos;
  PromptDataset dataset;  // each prompt lists its concept tokens
};

inline double concept_coverage_reward(const State& s, double rho, int horizon, std::optional<Token> eos) {
  std::set<Token> concepts(s.prompt.begin(), s.prompt.end());
  std::set<Token> seen;
  int produced = 0;
  for (Token t : s.generated) {
    if (eos && t == *eos) continue;
    seen.insert(t);
    ++produced;
  }
  int covered = 0;
  for (Token c : concepts) covered += seen.count(c) ? 1 : 0;
  const double coverage = concepts.empty() ? 1.0 : static_cast<double>(covered) / static_cast<double>(concepts.size());
  const int repeats = produced - static_cast<int>(seen.size());
  return coverage - rho * static_cast<double>(repeats) / static_cast<double>(horizon);
}

inline TaskSpec make_concept_coverage(const ConceptCoverageParams& p) {
  if (p.repetition_penalty < 0.0) throw Error(ErrorKind::invalid_argument, "repetition penalty must be >= 0");
  for (const auto& prompt : p.dataset.prompts) {
    for (Token c : prompt) {
      if (c < 0 || c >= p.vocab_size || (p.eos && c == *p.eos)) {
        throw Error(ErrorKind::invalid_token, "concept " + std::to_string(c) + " not in vocabulary");
      }
    }
  }
  TaskSpec task;
  task.name = "concept_coverage";
  task.vocab_size = p.vocab_size;
  task.horizon = p.horizon;
  task.eos = p.eos;
  task.dataset = p.dataset;
  validate_dataset(task.dataset, task.vocab_size);
  task.convention = RewardConvention::terminal;
  const double rho = p.repetition_penalty;
  const int horizon = p.horizon;
  const auto eos = p.eos;
  const int vocab = p.vocab_size;
  task.terminal_reward = [=](const State& s) { return concept_coverage_reward(s, rho, horizon, eos); };
  // Emit uncovered concepts in prompt order, then unused tokens.
  task.heuristic_guide = [=](const State& s) {
    std::vector<double> out(static_cast<std::size_t>(vocab), 0.0);
    std::set<Token> used(s.generated.begin(), s.generated.end());
    for (Token c : s.prompt) {
      if (!used.count(c)) {
        out[static_cast<std::size_t>(c)] = 1.0;
        return out;
      }
    }
    for (Token t = 0; t < vocab; ++t) {
      if (!used.count(t) && !(eos && t == *eos)) {
        out[static_cast<std::size_t>(t)] = 1.0;
        return out;
      }
    }
    out[static_cast<std::size_t>(eos ? *eos : s.prompt.empty() ? 0 : s.prompt.front())] = 1.0;
    return out;
  };
  task.default_beta_kl = 0.0;
  return task;
}

// ---------------------------------------------------------------------------
// Needle suffix: reward 1 iff the generation ends with an exact suffix.

struct NeedleSuffixParams {
  int vocab_size = 4;
  int horizon = 6;
  std::vector<Token> suffix{1, 3, 2, 1};
  PromptDataset dataset;
};

inline TaskSpec make_needle_suffix(const NeedleSuffixParams& p) {
  if (p.suffix.size() > static_cast<std::size_t>(p.horizon)) {
    throw Error(ErrorKind::invalid_argument, "suffix-too-long: suffix exceeds horizon");
  }
  for (Token t : p.suffix) {
    if (t < 0 || t >= p.vocab_size) throw Error(ErrorKind::invalid_token, "suffix token outside vocabulary");
  }
  TaskSpec task;
  task.name = "needle_suffix";
  task.vocab_size = p.vocab_size;
  task.horizon = p.horizon;
  task.dataset = p.dataset;
  if (task.dataset.empty()) task.dataset.prompts.push_back({0});
  validate_dataset(task.dataset, task.vocab_size);
  task.convention = RewardConvention::terminal;
  const auto suffix = p.suffix;
  task.terminal_reward = [=](const State& s) {
    if (suffix.size() > s.generated.size()) return 0.0;
    return std::equal(suffix.rbegin(), suffix.rend(), s.generated.rbegin()) ? 1.0 : 0.0;
  };
  const int horizon = p.horizon, vocab = p.vocab_size;
  task.heuristic_guide = [=](const State& s) {
    std::vector<double> out(static_cast<std::size_t>(vocab), 0.0);
    const std::size_t start = static_cast<std::size_t>(horizon) - suffix.size();
    const std::size_t h = s.h();
    out[static_cast<std::size_t>(h >= start ? suffix[h - start] : 0)] = 1.0;
    return out;
  };
  task.default_beta_kl = 0.0;
  return task;
}

// ---------------------------------------------------------------------------
// Sidecar files.

/// One weight per line (blank lines and '#' comments skipped).
inline std::vector<double> load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open lexicon " + path);
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(std::stod(line));
  }
  return out;
}

/// One row per line, whitespace-separated probabilities.
inline std::vector<double> load_bigram(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open bigram table " + path);
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    double x;
    while (row >> x) out.push_back(x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Guides.

/// Mix a distribution with the uniform one: (1 - eps) p + eps / |V|.
inline std::vector<double> blend_uniform(std::vector<double> p, double epsilon) {
  const double u = epsilon / static_cast<double>(p.size());
  for (double& x : p) x = (1.0 - epsilon) * x + u;
  return p;
}

inline void check_quality(double epsilon) {
  if (epsilon < 0.0 || epsilon > 1.0) throw Error(ErrorKind::invalid_argument, "guide epsilon must lie in [0, 1]");
}

/// Acts as the DP-optimal policy with probability 1 - epsilon and uniformly
/// otherwise.
inline PolicyPtr make_epsilon_optimal_guide(const DpSolution& sol, double epsilon) {
  check_quality(epsilon);
  const int vocab = sol.space->vocab_size();
  auto space = sol.space;
  auto greedy = sol.policy;
  return std::make_shared<const ScriptedPolicy>(
      vocab,
      [=](const State& s) {
        std::vector<double> onehot(static_cast<std::size_t>(vocab), 0.0);
        onehot[static_cast<std::size_t>(greedy[space->index(s)])] = 1.0;
        return blend_uniform(std::move(onehot), epsilon);
      },
      "epsilon_optimal");
}

inline PolicyPtr make_epsilon_optimal_guide(const TaskSpec& task, double epsilon,
                                            std::size_t budget = StateSpace::default_budget) {
  return make_epsilon_optimal_guide(dp_solve(task, budget), epsilon);
}

inline PolicyPtr make_heuristic_guide(const TaskSpec& task, double epsilon) {
  check_quality(epsilon);
  if (!task.heuristic_guide) throw Error(ErrorKind::invalid_argument, task.name + " has no scripted heuristic");
  auto rule = task.heuristic_guide;
  return std::make_shared<const ScriptedPolicy>(
      task.vocab_size, [=](const State& s) { return blend_uniform(rule(s), epsilon); }, "scripted_heuristic");
}

/// Demonstrations: `trajectories` rollouts of `teacher` from uniformly drawn
/// prompts.
inline std::vector<Demonstration> collect_demonstrations(const Policy& teacher, const TaskSpec& task,
                                                         std::size_t trajectories, Rng& rng) {
  std::vector<Demonstration> demos;
  for (std::size_t i = 0; i < trajectories; ++i) {
    State s = sample_prompt(task.dataset, rng);
    while (!is_terminal(s, task)) {
      const Token a = teacher.sample(s, rng);
      demos.push_back({s, a});
      s = transition(s, a, task);
    }
  }
  return demos;
}

/// Frozen snapshot of a policy behavior-cloned from `teacher`.
inline PolicyPtr make_frozen_bc_guide(const Policy& teacher, const TaskSpec& task,
                                      std::shared_ptr<const FeatureMap> features, std::size_t trajectories,
                                      const BcConfig& cfg, Rng& rng) {
  SoftmaxPolicy student(std::move(features), task.vocab_size);
  const auto demos = collect_demonstrations(teacher, task, trajectories, rng);
  bc_update(student, demos, cfg);
  return std::make_shared<const FrozenSnapshot>(std::move(student));
}

}  // namespace l2s
