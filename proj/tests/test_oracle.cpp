// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "l2s/oracle.hpp"
#include "l2s/tasks.hpp"
#include "test_util.hpp"

namespace l2s {
namespace {

TEST(DpSolve, TwoTokenNeedle) {
  const TaskSpec task = testing::needle11();
  const auto sol = dp_solve(task);
  EXPECT_EQ(sol.initial_value(0), 1.0);
  State s = initial_state({0});
  for (int t = 0; t < 2; ++t) {
    EXPECT_EQ(sol.action(s), 1);
    s = transition(s, sol.action(s), task);
  }
  EXPECT_LE(bellman_residual(sol, task), 1e-12);
}

TEST(DpSolve, ZeroRewardAndPerStepReward) {
  const auto zero = dp_solve(testing::zero_reward_task(3, 3));
  for (double v : zero.v) EXPECT_EQ(v, 0.0);
  for (double q : zero.q) EXPECT_EQ(q, 0.0);
  const auto task = testing::per_step_task(2, 3, 0);
  const auto sol = dp_solve(task);
  EXPECT_EQ(sol.initial_value(0), 3.0);
  EXPECT_LE(bellman_residual(sol, task), 1e-12);
}

TEST(DpSolve, TiesGoToTheLowestToken) {
  const auto sol = dp_solve(testing::zero_reward_task(3, 2));
  for (Token a : sol.policy) EXPECT_EQ(a, 0);
}

TEST(DpSolve, OptimalPolicyAchievesTheOptimalValue) {
  const TaskSpec task = make_needle_suffix({});
  const auto sol = dp_solve(task);
  const auto greedy = make_epsilon_optimal_guide(sol, 0.0);
  const auto eval = policy_value_exact(*greedy, task, sol.space);
  for (std::size_t i = 0; i < sol.v.size(); ++i) EXPECT_NEAR(eval.v[i], sol.v[i], 1e-12);
}

TEST(PolicyValue, DeterministicAndUniform) {
  const TaskSpec task = testing::needle11();
  const auto det = testing::constant_policy(2, 1);
  EXPECT_EQ(policy_value_exact(*det, task).mean_initial, 1.0);
  const auto zero = testing::constant_policy(2, 0);
  EXPECT_EQ(policy_value_exact(*zero, task).mean_initial, 0.0);
  EXPECT_DOUBLE_EQ(policy_value_exact(*testing::uniform_policy(2), task).mean_initial, 0.25);
}

TEST(PolicyValue, AdvantageOfTheOwnDistributionIsZero) {
  const TaskSpec task = make_needle_suffix({});
  const auto guide = make_epsilon_optimal_guide(task, 0.3);
  const auto eval = policy_value_exact(*guide, task);
  for (std::size_t i = 0; i < eval.space->size(); ++i) {
    const auto pi = guide->distribution(eval.space->state(i));
    double mean = 0.0;
    for (Token a = 0; a < 4; ++a) mean += pi[static_cast<std::size_t>(a)] * eval.advantage(i, a);
    EXPECT_NEAR(mean, 0.0, 1e-12);
  }
}

TEST(Visitation, DeterministicPolicyIsUniformAlongItsPath) {
  const TaskSpec task = testing::per_step_task(2, 3);
  const StateSpace space(task);
  const auto d = visitation_exact(*testing::constant_policy(2, 1), task, space);
  State s = initial_state({0});
  for (int t = 0; t < 3; ++t) {
    EXPECT_NEAR(d[space.index(s)], 1.0 / 3.0, 1e-15);
    s = transition(s, 1, task);
  }
  EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-12);
}

TEST(Visitation, UniformTwoByTwo) {
  const TaskSpec task = testing::needle11();
  const StateSpace space(task);
  const auto d = visitation_exact(*testing::uniform_policy(2), task, space);
  EXPECT_DOUBLE_EQ(d[space.index(initial_state({0}))], 0.5);
  EXPECT_DOUBLE_EQ(d[space.index(State{{0}, {0}})], 0.25);
  EXPECT_DOUBLE_EQ(d[space.index(State{{0}, {1}})], 0.25);
}

TEST(Visitation, EarlyTerminationStillSumsToOne) {
  ConceptCoverageParams p;
  p.eos = 0;
  p.dataset.prompts = {{1, 2, 3}};
  const TaskSpec task = make_concept_coverage(p);
  const auto d = visitation_exact(*testing::uniform_policy(6), task);
  EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-9);
}

TEST(McEvaluate, DeterministicPolicyHasZeroError) {
  const TaskSpec task = testing::needle11();
  Rng rng(0);
  const auto mc = mc_evaluate(*testing::constant_policy(2, 1), task, 10, rng);
  EXPECT_EQ(mc.mean, 1.0);
  ASSERT_TRUE(mc.standard_error.has_value());
  EXPECT_EQ(*mc.standard_error, 0.0);
  EXPECT_EQ(mc.rollouts, 10u);
}

TEST(McEvaluate, SingleRolloutHasNoError) {
  const TaskSpec task = testing::needle11();
  Rng rng(0);
  EXPECT_FALSE(mc_evaluate(*testing::uniform_policy(2), task, 1, rng).standard_error.has_value());
  EXPECT_THROW(mc_evaluate(*testing::uniform_policy(2), task, 0, rng), Error);
}

TEST(McEvaluate, AgreesWithTheExactValue) {
  const TaskSpec task = make_needle_suffix({});
  const auto guide = make_epsilon_optimal_guide(task, 0.3);
  Rng rng(4);
  const auto mc = mc_evaluate(*guide, task, 20000, rng);
  const double exact = policy_value_exact(*guide, task).mean_initial;
  EXPECT_LE(std::abs(mc.mean - exact), 3.0 * *mc.standard_error);
}

TEST(McEvaluate, GreedyDecoding) {
  const TaskSpec task = make_needle_suffix({});
  const auto guide = make_epsilon_optimal_guide(task, 0.5);
  Rng rng(0);
  EXPECT_EQ(mc_evaluate(*guide, task, 3, rng, true).mean, 1.0);
}

TEST(Buckets, ExactQuantiles) {
  const std::vector<double> scores{0.1, 0.9, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6};
  const auto b = difficulty_buckets(scores, 3);
  EXPECT_EQ(b.labels, (std::vector<std::string>{"easy", "medium", "hard"}));
  for (const auto& m : b.members) EXPECT_EQ(m.size(), 3u);
  EXPECT_EQ(b.assignment[1], 0u);
  EXPECT_EQ(b.assignment[0], 2u);
  EXPECT_NEAR(b.gap(scores), 0.8 - 0.2, 1e-12);
}

TEST(Buckets, TiesKeepPromptOrder) {
  const auto b = difficulty_buckets(std::vector<double>(7, 1.0), 3);
  EXPECT_EQ(b.members[0], (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(b.members[1], (std::vector<std::size_t>{3, 4}));
  EXPECT_EQ(b.members[2], (std::vector<std::size_t>{5, 6}));
  EXPECT_THROW(difficulty_buckets(std::vector<double>(2, 1.0), 3), Error);
  EXPECT_EQ(difficulty_buckets(std::vector<double>(4, 0.0), 2).labels, (std::vector<std::string>{"easy", "hard"}));
}

TEST(ChiSquare, AcceptsAndRejects) {
  const std::vector<double> probs{0.5, 0.25, 0.25};
  EXPECT_GT(chi_square_test({5000, 2500, 2500}, probs).p_value, 0.99);
  EXPECT_LT(chi_square_test({6000, 2000, 2000}, probs).p_value, 1e-6);
  const auto pooled = chi_square_test({990, 5, 3, 2}, {0.99, 0.004, 0.003, 0.003});
  EXPECT_EQ(pooled.dof, 1u);
  EXPECT_THROW(chi_square_test({1, 2}, {1.0}), Error);
}

TEST(ChiSquare, SampledVisitationMatchesExact) {
  const TaskSpec task = make_needle_suffix({});
  const StateSpace space(task);
  const auto guide = make_epsilon_optimal_guide(task, 0.3);
  const auto d = visitation_exact(*guide, task, space);
  std::vector<double> counts(space.size(), 0.0);
  Rng rng(12);
  for (int i = 0; i < 10000; ++i) {
    State s = initial_state({0});
    std::vector<std::size_t> path;
    while (!is_terminal(s, task)) {
      path.push_back(space.index(s));
      s = transition(s, guide->sample(s, rng), task);
    }
    counts[path[rng.below(path.size())]] += 1.0;
  }
  EXPECT_GT(chi_square_test(counts, d).p_value, 0.01);
}

TEST(Export, OneRowPerState) {
  const TaskSpec task = testing::needle11();
  const auto sol = dp_solve(task);
  std::ostringstream out;
  export_dp_solution(out, sol);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("# l2s-dp-solution v1 states=3", 0), 0u);
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
  EXPECT_NE(out.str().find("0 | \t1\t"), std::string::npos);
}

}  // namespace
}  // namespace l2s
