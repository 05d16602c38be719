// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "l2s/oracle.hpp"
#include "l2s/tasks.hpp"
#include "test_util.hpp"

namespace l2s {
namespace {

PositiveContinuationParams pc_params(double w) {
  PositiveContinuationParams p;
  p.lexicon = {1.0, 1.0, 0.0, 0.0, -1.0, -1.0};
  p.bigram = persistent_bigram(p.lexicon, 3);
  p.sentiment_weight = w;
  p.dataset.prompts = {{0}, {4}};
  return p;
}

TEST(PositiveContinuation, PureSentiment) {
  const TaskSpec task = make_positive_continuation(pc_params(1.0));
  EXPECT_DOUBLE_EQ(task.terminal_reward(State{{4}, {0, 1, 0, 1}}), 1.0);
  EXPECT_DOUBLE_EQ(task.terminal_reward(State{{0}, {4, 5, 4, 5}}), -1.0);
}

TEST(PositiveContinuation, PureFluency) {
  const auto p = pc_params(0.0);
  const TaskSpec task = make_positive_continuation(p);
  std::vector<double> logb(p.bigram.size());
  for (std::size_t i = 0; i < logb.size(); ++i) logb[i] = std::log(p.bigram[i]);
  const auto [lo, hi] = std::minmax_element(logb.begin(), logb.end());
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    State s{{static_cast<Token>(rng.below(6))}, {}};
    for (int i = 0; i < 4; ++i) s.generated.push_back(static_cast<Token>(rng.below(6)));
    double mean = 0.0;
    Token prev = s.prompt.back();
    for (Token t : s.generated) {
      mean += logb[static_cast<std::size_t>(prev * 6 + t)] / 4.0;
      prev = t;
    }
    EXPECT_NEAR(task.terminal_reward(s), (mean - *lo) / (*hi - *lo), 1e-12);
    EXPECT_GE(task.terminal_reward(s), -1e-12);
    EXPECT_LE(task.terminal_reward(s), 1.0 + 1e-12);
  }
}

TEST(PositiveContinuation, InvalidTables) {
  auto p = pc_params(0.7);
  p.bigram[0] += 0.5;
  EXPECT_THROW(make_positive_continuation(p), Error);
  p = pc_params(0.7);
  p.bigram[1] = 0.0;
  EXPECT_THROW(make_positive_continuation(p), Error);
  p = pc_params(0.7);
  p.bigram.pop_back();
  EXPECT_THROW(make_positive_continuation(p), Error);
  p = pc_params(0.7);
  p.lexicon[0] = std::nan("");
  EXPECT_THROW(make_positive_continuation(p), Error);
}

TEST(PositiveContinuation, DifficultyAndGuide) {
  const TaskSpec task = make_positive_continuation(pc_params(0.7));
  EXPECT_GT(task.difficulty(initial_state({0})), task.difficulty(initial_state({4})));
  const auto guide = make_heuristic_guide(task, 0.0);
  const auto d = guide->distribution(State{{0}, {1}});
  EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-12);
  EXPECT_GT(d[0] + d[1], d[4] + d[5]);
}

TEST(PositiveContinuation, BigramRowsAreNormalized) {
  const std::vector<double> lex{0.5, -0.5, 0.0, 1.0};
  const auto table = persistent_bigram(lex, 9);
  for (std::size_t i = 0; i < 4; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 4; ++j) row += table[i * 4 + j];
    EXPECT_NEAR(row, 1.0, 1e-12);
  }
  EXPECT_EQ(table, persistent_bigram(lex, 9));
}

ConceptCoverageParams concept_params(double rho, int horizon) {
  ConceptCoverageParams p;
  p.horizon = horizon;
  p.repetition_penalty = rho;
  p.dataset.prompts = {{1, 2, 3}};
  return p;
}

TEST(ConceptCoverage, FormulaCases) {
  EXPECT_DOUBLE_EQ(make_concept_coverage(concept_params(0.0, 5)).terminal_reward(State{{1, 2, 3}, {3, 1, 2, 0, 4}}), 1.0);
  EXPECT_DOUBLE_EQ(make_concept_coverage(concept_params(0.0, 4)).terminal_reward(State{{1, 2, 3}, {2, 2, 2, 2}}), 1.0 / 3.0);
  const double hacked = make_concept_coverage(concept_params(0.5, 4)).terminal_reward(State{{1, 2, 3}, {2, 2, 2, 2}});
  EXPECT_NEAR(hacked, 1.0 / 3.0 - 0.5 * 3.0 / 4.0, 1e-15);
  EXPECT_NEAR(hacked, -0.0417, 1e-4);
}

TEST(ConceptCoverage, EosIsNeitherConceptNorRepeat) {
  auto p = concept_params(0.5, 5);
  p.eos = 0;
  const TaskSpec task = make_concept_coverage(p);
  EXPECT_TRUE(is_terminal(State{{1, 2, 3}, {1, 2, 3, 0}}, task));
  EXPECT_DOUBLE_EQ(task.terminal_reward(State{{1, 2, 3}, {1, 2, 3, 0}}), 1.0);
}

TEST(ConceptCoverage, Errors) {
  auto p = concept_params(0.0, 5);
  p.dataset.prompts = {{1, 9}};
  try {
    make_concept_coverage(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_token);
  }
  EXPECT_THROW(make_concept_coverage(concept_params(-0.1, 5)), Error);
  p = concept_params(0.0, 5);
  p.eos = 2;
  EXPECT_THROW(make_concept_coverage(p), Error);
}

TEST(ConceptCoverage, HeuristicGuideCoversTheConcepts) {
  const TaskSpec task = make_concept_coverage(concept_params(0.5, 5));
  const auto guide = make_heuristic_guide(task, 0.0);
  Rng rng(0);
  State s = initial_state({1, 2, 3});
  while (!is_terminal(s, task)) s = transition(s, guide->sample(s, rng), task);
  EXPECT_EQ(s.generated, (std::vector<Token>{1, 2, 3, 0, 4}));
  EXPECT_DOUBLE_EQ(task.terminal_reward(s), 1.0);
}

TEST(NeedleSuffix, UniformSuccessProbability) {
  const TaskSpec task = make_needle_suffix({});
  EXPECT_NEAR(policy_value_exact(*testing::uniform_policy(4), task).mean_initial, std::pow(4.0, -4.0), 1e-15);
}

TEST(NeedleSuffix, RewardCases) {
  NeedleSuffixParams exact;
  exact.horizon = 4;
  const TaskSpec task = make_needle_suffix(exact);
  EXPECT_EQ(task.terminal_reward(State{{0}, {1, 3, 2, 1}}), 1.0);
  EXPECT_EQ(task.terminal_reward(State{{0}, {1, 3, 2, 2}}), 0.0);
  NeedleSuffixParams empty;
  empty.suffix = {};
  const TaskSpec always = make_needle_suffix(empty);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    State s = initial_state({0});
    while (!is_terminal(s, always)) s = transition(s, static_cast<Token>(rng.below(4)), always);
    EXPECT_EQ(always.terminal_reward(s), 1.0);
  }
  NeedleSuffixParams too_long;
  too_long.horizon = 3;
  EXPECT_THROW(make_needle_suffix(too_long), Error);
  NeedleSuffixParams bad_token;
  bad_token.suffix = {7};
  EXPECT_THROW(make_needle_suffix(bad_token), Error);
}

TEST(Guides, EpsilonOptimalEndpointsAndClosedForm) {
  const TaskSpec task = make_needle_suffix({});
  const auto sol = dp_solve(task);
  auto value = [&](double eps) {
    return policy_value_exact(*make_epsilon_optimal_guide(sol, eps), task, sol.space).mean_initial;
  };
  EXPECT_NEAR(value(0.0), sol.initial_value(0), 1e-12);
  EXPECT_NEAR(value(1.0), policy_value_exact(*testing::uniform_policy(4), task, sol.space).mean_initial, 1e-12);
  // Each of the four suffix tokens is right with probability 1 - eps + eps/4.
  for (double eps : {0.1, 0.3, 0.6}) EXPECT_NEAR(value(eps), std::pow(1.0 - 0.75 * eps, 4), 1e-12);
  EXPECT_NEAR(value(0.3), 0.36075039062499975, 1e-12);
  EXPECT_THROW(make_epsilon_optimal_guide(sol, 1.5), Error);
}

TEST(Guides, ValueIsMonotoneInEpsilon) {
  for (const TaskSpec& task : {make_needle_suffix({}), make_concept_coverage([] {
         auto p = concept_params(0.2, 5);
         p.dataset.prompts = {{1, 2, 3}, {2, 4, 5}};
         return p;
       }())}) {
    const auto sol = dp_solve(task);
    double previous = std::numeric_limits<double>::infinity();
    for (double eps = 0.0; eps <= 1.0 + 1e-9; eps += 0.1) {
      const double v = policy_value_exact(*make_epsilon_optimal_guide(sol, std::min(eps, 1.0)), task, sol.space).mean_initial;
      EXPECT_LE(v, previous + 1e-12);
      previous = v;
    }
  }
}

TEST(Guides, FrozenBcGuide) {
  const TaskSpec task = make_needle_suffix({});
  const auto space = std::make_shared<const StateSpace>(task);
  const auto teacher = make_epsilon_optimal_guide(dp_solve(task, space), 0.0);
  Rng rng(2);
  const auto guide = make_frozen_bc_guide(*teacher, task, make_features({FeatureConfig::Kind::tabular}, task, space),
                                          32, BcConfig{1.0, 100}, rng);
  EXPECT_EQ(guide->kind(), PolicyKind::frozen_snapshot);
  EXPECT_GT(policy_value_exact(*guide, task, space).mean_initial, 0.5);
  State s = initial_state({0});
  while (!is_terminal(s, task)) {
    const auto d = guide->distribution(s);
    const Token best = static_cast<Token>(std::max_element(d.begin(), d.end()) - d.begin());
    EXPECT_EQ(best, teacher->sample(s, rng));
    s = transition(s, best, task);
  }
  Rng demo_rng(0);
  EXPECT_EQ(collect_demonstrations(*teacher, task, 5, demo_rng).size(), 5u * 6);
}

TEST(Guides, HeuristicNeedsARule) {
  TaskSpec task = testing::per_step_task(2, 2);
  EXPECT_THROW(make_heuristic_guide(task, 0.1), Error);
  const TaskSpec needle = make_needle_suffix({});
  const auto guide = make_heuristic_guide(needle, 0.0);
  EXPECT_EQ(policy_value_exact(*guide, needle).mean_initial, 1.0);
}

TEST(Tasks, RewardsArePure) {
  const TaskSpec pc = make_positive_continuation(pc_params(0.7));
  const State s{{0}, {1, 2, 3, 4}};
  EXPECT_EQ(pc.terminal_reward(s), pc.terminal_reward(s));
}

TEST(Sidecars, LexiconAndBigramFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "l2s_test_sidecars";
  std::filesystem::create_directories(dir);
  {
    std::ofstream lex(dir / "lex.txt");
    lex << "# weights\n1\n-0.5\n";
    std::ofstream big(dir / "big.txt");
    big << "0.25 0.75\n0.5 0.5\n";
  }
  EXPECT_EQ(load_lexicon((dir / "lex.txt").string()), (std::vector<double>{1.0, -0.5}));
  EXPECT_EQ(load_bigram((dir / "big.txt").string()), (std::vector<double>{0.25, 0.75, 0.5, 0.5}));
  EXPECT_THROW(load_lexicon((dir / "missing.txt").string()), Error);
  std::filesystem::remove_all(dir);
}

TEST(Presets, TinyTasksFitTheOracleBudget) {
  ConceptCoverageParams cc = concept_params(0.0, 5);
  for (const TaskSpec& task : {make_needle_suffix({}), make_concept_coverage(cc), make_positive_continuation(pc_params(0.7))}) {
    EXPECT_LE(StateSpace::required_nodes(task), StateSpace::default_budget) << task.name;
    EXPECT_LE(task.vocab_size, 8);
    EXPECT_LE(task.horizon, 6);
  }
}

}  // namespace
}  // namespace l2s
