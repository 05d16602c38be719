// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "l2s/error.hpp"
#include "l2s/rng.hpp"

namespace l2s {

using Token = std::int32_t;

/// Prompt plus the tokens generated so far. The step index is the length of
/// the generated sequence. States are plain values: restarts copy them.
struct State {
  std::vector<Token> prompt;
  std::vector<Token> generated;

  std::size_t h() const { return generated.size(); }

  /// Last token of prompt ++ generated, if any.
  std::optional<Token> last_token() const {
    if (!generated.empty()) return generated.back();
    if (!prompt.empty()) return prompt.back();
    return std::nullopt;
  }

  friend bool operator==(const State&, const State&) = default;
};

inline State initial_state(std::vector<Token> prompt) { return State{std::move(prompt), {}}; }

struct PromptDataset {
  std::vector<std::vector<Token>> prompts;
  /// Optional target sequences, either empty or one per prompt.
  std::vector<std::vector<Token>> references;
  /// Optional sampling weights, either empty (uniform) or one per prompt.
  std::vector<double> weights;

  std::size_t size() const { return prompts.size(); }
  bool empty() const { return prompts.empty(); }
};

enum class RewardConvention { per_step, terminal };

/// Finite-horizon token MDP. Transitions append; rewards are pure functions
/// of the token sequence.
struct TaskSpec {
  std::string name;
  int vocab_size = 2;
  int horizon = 1;
  std::optional<Token> eos;
  PromptDataset dataset;
  RewardConvention convention = RewardConvention::terminal;
  std::function<double(const State&, Token)> step_reward;
  std::function<double(const State&)> terminal_reward;

  /// Optional per-prompt score (higher is easier) evaluated on initial states.
  std::function<double(const State&)> difficulty;
  /// Optional task-specific scripted guide: a distribution over the vocabulary.
  std::function<std::vector<double>(const State&)> heuristic_guide;
  /// Optional "pretrained" next-token log-probabilities, row-major
  /// vocab_size x vocab_size, indexed by the last context token.
  std::vector<double> context_prior;
  /// Default KL coefficient for runs on this task.
  double default_beta_kl = 0.0;

  bool valid_token(Token t) const { return t >= 0 && t < vocab_size; }

  /// Reward credited to taking `action` in `state`, landing in `next`.
  double reward(const State& state, Token action, const State& next) const;
};

inline bool is_terminal(const State& state, const TaskSpec& task) {
  if (state.h() >= static_cast<std::size_t>(task.horizon)) return true;
  return task.eos && !state.generated.empty() && state.generated.back() == *task.eos;
}

inline State transition(const State& state, Token action, int horizon) {
  if (state.h() >= static_cast<std::size_t>(horizon)) {
    throw Error(ErrorKind::horizon_exceeded,
                "step index " + std::to_string(state.h()) + " at horizon " + std::to_string(horizon));
  }
  State next = state;
  next.generated.push_back(action);
  return next;
}

inline State transition(const State& state, Token action, const TaskSpec& task) {
  if (!task.valid_token(action)) {
    throw Error(ErrorKind::invalid_token, "token " + std::to_string(action) + " outside vocabulary");
  }
  return transition(state, action, task.horizon);
}

inline double TaskSpec::reward(const State& state, Token action, const State& next) const {
  if (convention == RewardConvention::per_step) return step_reward ? step_reward(state, action) : 0.0;
  return is_terminal(next, *this) && terminal_reward ? terminal_reward(next) : 0.0;
}

struct TrajectoryStep {
  State state;
  Token action = 0;
  double raw_reward = 0.0;
  double shaped_reward = 0.0;
  double learner_log_prob = 0.0;
  bool guide_acted = false;
};

struct Trajectory {
  State initial;
  std::vector<TrajectoryStep> steps;
  double total_return = 0.0;

  std::size_t size() const { return steps.size(); }
  bool empty() const { return steps.empty(); }

  State final_state() const {
    if (steps.empty()) return initial;
    State s = steps.back().state;
    s.generated.push_back(steps.back().action);
    return s;
  }

  double raw_return() const {
    double total = 0.0;
    for (const auto& step : steps) total += step.raw_reward;
    return total;
  }

  void recompute_total() {
    total_return = 0.0;
    for (const auto& step : steps) total_return += step.shaped_reward;
  }
};

/// True iff replaying the actions from the initial state reproduces every
/// stored state and the total equals the sum of shaped rewards.
inline bool replay_consistent(const Trajectory& traj, const TaskSpec& task) {
  State s = traj.initial;
  double total = 0.0;
  for (const auto& step : traj.steps) {
    if (!(step.state == s)) return false;
    s = transition(s, step.action, task);
    total += step.shaped_reward;
  }
  return std::abs(total - traj.total_return) <= 1e-12 * std::max(1.0, std::abs(total));
}

inline State sample_prompt(const PromptDataset& dataset, Rng& rng) {
  if (dataset.empty()) throw Error(ErrorKind::empty_dataset, "cannot sample from an empty dataset");
  std::size_t index = 0;
  if (dataset.weights.empty()) {
    index = static_cast<std::size_t>(rng.below(dataset.size()));
  } else {
    const double total = std::accumulate(dataset.weights.begin(), dataset.weights.end(), 0.0);
    double u = rng.uniform() * total;
    index = dataset.size() - 1;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (u < dataset.weights[i]) {
        index = i;
        break;
      }
      u -= dataset.weights[i];
    }
  }
  return initial_state(dataset.prompts[index]);
}

inline void validate_dataset(const PromptDataset& dataset, int vocab_size) {
  if (dataset.empty()) throw Error(ErrorKind::empty_dataset, "dataset has no prompts");
  auto check = [&](const std::vector<Token>& seq) {
    for (Token t : seq) {
      if (t < 0 || t >= vocab_size) {
        throw Error(ErrorKind::invalid_token, "token " + std::to_string(t) + " outside vocabulary");
      }
    }
  };
  for (const auto& p : dataset.prompts) check(p);
  for (const auto& r : dataset.references) check(r);
  if (!dataset.references.empty() && dataset.references.size() != dataset.prompts.size()) {
    throw Error(ErrorKind::invalid_argument, "references must be absent or one per prompt");
  }
}

namespace detail {
inline std::vector<Token> parse_tokens(const std::string& field, std::size_t line_no) {
  std::vector<Token> out;
  std::istringstream in(field);
  std::string word;
  while (in >> word) {
    try {
      std::size_t used = 0;
      const long value = std::stol(word, &used);
      if (used != word.size()) throw std::invalid_argument(word);
      out.push_back(static_cast<Token>(value));
    } catch (const std::exception&) {
      throw Error(ErrorKind::config_parse,
                  "line " + std::to_string(line_no) + ": bad token '" + word + "'");
    }
  }
  return out;
}
}  // namespace detail

/// One prompt per line as space-separated integers; an optional
/// tab-separated second field holds the reference sequence. Blank lines are
/// skipped.
inline PromptDataset read_dataset(std::istream& in, int vocab_size) {
  PromptDataset dataset;
  bool any_reference = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    dataset.prompts.push_back(detail::parse_tokens(line.substr(0, tab), line_no));
    if (tab != std::string::npos) {
      dataset.references.push_back(detail::parse_tokens(line.substr(tab + 1), line_no));
      any_reference = true;
    } else {
      dataset.references.emplace_back();
    }
  }
  if (!any_reference) dataset.references.clear();
  validate_dataset(dataset, vocab_size);
  return dataset;
}

inline PromptDataset load_dataset(const std::string& path, int vocab_size) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open dataset " + path);
  return read_dataset(in, vocab_size);
}

inline void write_dataset(std::ostream& out, const PromptDataset& dataset) {
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (std::size_t j = 0; j < dataset.prompts[i].size(); ++j) {
      out << (j ? " " : "") << dataset.prompts[i][j];
    }
    if (!dataset.references.empty()) {
      out << '\t';
      const auto& ref = dataset.references[i];
      for (std::size_t j = 0; j < ref.size(); ++j) out << (j ? " " : "") << ref[j];
    }
    out << '\n';
  }
}

}  // namespace l2s
