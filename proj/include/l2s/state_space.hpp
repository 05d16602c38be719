// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "l2s/error.hpp"
#include "l2s/mdp.hpp"

namespace l2s {

/// Enumeration of every non-terminal state reachable from the dataset's
/// prompts, in lexicographic order of (prompt, generated). Identical prompts
/// share one subtree.
class StateSpace {
 public:
  static constexpr std::size_t default_budget = 1'000'000;
  static constexpr std::int64_t terminal = -1;

  /// Size of the full token tree (all depths 0..H, terminal leaves included)
  /// over the distinct prompts; saturates at SIZE_MAX.
  static std::size_t required_nodes(const TaskSpec& task) {
    const std::size_t distinct = distinct_prompts(task.dataset).size();
    const auto cap = std::numeric_limits<std::size_t>::max();
    std::size_t level = 1, total = 0;
    for (int h = 0; h <= task.horizon; ++h) {
      if (total > cap - level) return cap;
      total += level;
      if (h < task.horizon) {
        if (level > cap / static_cast<std::size_t>(task.vocab_size)) return cap;
        level *= static_cast<std::size_t>(task.vocab_size);
      }
    }
    if (distinct != 0 && total > cap / distinct) return cap;
    return total * distinct;
  }

  explicit StateSpace(const TaskSpec& task, std::size_t budget = default_budget)
      : vocab_(task.vocab_size), horizon_(task.horizon) {
    const std::size_t need = required_nodes(task);
    if (need > budget) {
      throw Error(ErrorKind::budget_exceeded, "state tree needs " + std::to_string(need) +
                                                  " nodes, budget is " + std::to_string(budget));
    }
    validate_dataset(task.dataset, task.vocab_size);
    for (const auto& prompt : distinct_prompts(task.dataset)) {
      root_by_prompt_[prompt] = states_.size();
      expand(initial_state(prompt), task);
    }
    for (const auto& prompt : task.dataset.prompts) dataset_roots_.push_back(root_by_prompt_.at(prompt));
  }

  std::size_t size() const { return states_.size(); }
  int vocab_size() const { return vocab_; }
  int horizon() const { return horizon_; }

  const State& state(std::size_t i) const { return states_[i]; }
  const std::vector<State>& states() const { return states_; }

  /// Child node index, or `terminal` if the successor ends the episode.
  std::int64_t child(std::size_t i, Token a) const {
    return children_[i * static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(a)];
  }

  /// Root node of the i-th dataset prompt.
  std::size_t root(std::size_t prompt_index) const { return dataset_roots_.at(prompt_index); }
  const std::vector<std::size_t>& dataset_roots() const { return dataset_roots_; }

  std::optional<std::size_t> find(const State& s) const {
    auto it = root_by_prompt_.find(s.prompt);
    if (it == root_by_prompt_.end()) return std::nullopt;
    std::int64_t node = static_cast<std::int64_t>(it->second);
    for (Token t : s.generated) {
      if (t < 0 || t >= vocab_) return std::nullopt;
      node = child(static_cast<std::size_t>(node), t);
      if (node == terminal) return std::nullopt;
    }
    return static_cast<std::size_t>(node);
  }

  std::size_t index(const State& s) const {
    if (auto i = find(s)) return *i;
    throw Error(ErrorKind::unreachable_state, "state is not among the enumerated states");
  }

 private:
  static std::vector<std::vector<Token>> distinct_prompts(const PromptDataset& dataset) {
    std::vector<std::vector<Token>> out;
    std::map<std::vector<Token>, bool> seen;
    for (const auto& p : dataset.prompts) {
      if (seen.emplace(p, true).second) out.push_back(p);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  std::size_t expand(const State& s, const TaskSpec& task) {
    const std::size_t id = states_.size();
    states_.push_back(s);
    children_.resize(children_.size() + static_cast<std::size_t>(vocab_), terminal);
    for (Token a = 0; a < vocab_; ++a) {
      State next = transition(s, a, task);
      if (is_terminal(next, task)) continue;
      const std::size_t c = expand(next, task);
      children_[id * static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(a)] =
          static_cast<std::int64_t>(c);
    }
    return id;
  }

  int vocab_;
  int horizon_;
  std::vector<State> states_;
  std::vector<std::int64_t> children_;
  std::map<std::vector<Token>, std::size_t> root_by_prompt_;
  std::vector<std::size_t> dataset_roots_;
};

}  // namespace l2s
