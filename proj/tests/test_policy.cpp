// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "l2s/checkpoint.hpp"
#include "l2s/features.hpp"
#include "l2s/optim.hpp"
#include "l2s/policy.hpp"
#include "l2s/tasks.hpp"
#include "test_util.hpp"

namespace l2s {
namespace {

using testing::within_3sigma;

std::shared_ptr<const StateSpace> needle_space(const TaskSpec& task) { return std::make_shared<const StateSpace>(task); }

TEST(Softmax, UniformAndTwoTokenValues) {
  const TaskSpec task = testing::needle11();
  SoftmaxPolicy tab(make_features({FeatureConfig::Kind::tabular}, task), 2);
  for (double p : tab.distribution(initial_state({0}))) EXPECT_DOUBLE_EQ(p, 0.5);

  TaskSpec four = make_needle_suffix({});
  SoftmaxPolicy tab4(make_features({FeatureConfig::Kind::tabular}, four), 4);
  for (double p : tab4.distribution(initial_state({0}))) EXPECT_DOUBLE_EQ(p, 0.25);
  EXPECT_DOUBLE_EQ(tab4.log_prob(initial_state({0}), 2), std::log(0.25));

  SoftmaxPolicy lin(make_features({FeatureConfig::Kind::window, 2, true}, four), 4);
  for (double p : lin.distribution(State{{0}, {1, 2}})) EXPECT_DOUBLE_EQ(p, 0.25);

  const auto root = TabularFeatures(needle_space(task)).features(initial_state({0})).front().index;
  tab.params()[root * 2 + 0] = 1.0;
  const auto d = tab.distribution(initial_state({0}));
  EXPECT_NEAR(d[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_NEAR(d[0], 0.7311, 1e-4);
  EXPECT_NEAR(d[1], 0.2689, 1e-4);
}

TEST(Softmax, StableForLargeLogits) {
  const std::vector<double> z{1000.0, 0.0, -1000.0};
  const auto p = softmax(z);
  EXPECT_NEAR(p[0], 1.0, 1e-15);
  EXPECT_TRUE(std::isfinite(log_softmax_at(z, 2)));
}

TEST(Sampling, OneHotGuideAlwaysEmitsItsToken) {
  const auto guide = testing::constant_policy(4, 2);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(guide->sample(initial_state({0}), rng), 2);
}

TEST(Sampling, UniformFrequencies) {
  const auto u = testing::uniform_policy(4);
  Rng rng(8);
  std::vector<double> counts(4, 0.0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(sample_action(*u, initial_state({0}), rng))] += 1.0;
  for (double c : counts) EXPECT_TRUE(within_3sigma(c, n, 0.25)) << c;
}

TEST(Sampling, DeterministicUnderASeed) {
  const auto u = testing::uniform_policy(5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng a(seed), b(seed);
    EXPECT_EQ(u->sample(initial_state({0}), a), u->sample(initial_state({0}), b));
  }
}

/// Central finite differences of log pi(a|s) in every parameter.
double max_relative_error(SoftmaxPolicy& policy, const State& s, Token a) {
  const auto analytic = policy.log_prob_and_grad(s, a).gradient;
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < policy.num_params(); ++i) {
    const double keep = policy.params()[i];
    policy.params()[i] = keep + h;
    const double up = policy.log_prob(s, a);
    policy.params()[i] = keep - h;
    const double down = policy.log_prob(s, a);
    policy.params()[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(numeric - analytic[i]) / std::max(1.0, std::abs(numeric) + std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

TEST(Gradient, MatchesFiniteDifferences) {
  const TaskSpec task = make_needle_suffix({});
  const auto space = needle_space(task);
  Rng rng(4);
  for (auto kind : {FeatureConfig::Kind::tabular, FeatureConfig::Kind::window}) {
    SoftmaxPolicy policy(make_features({kind, 2, true}, task, space), 4);
    for (int trial = 0; trial < 20; ++trial) {
      for (double& x : policy.params()) x = 2.0 * rng.uniform() - 1.0;
      const State& s = space->state(rng.below(space->size()));
      const Token a = static_cast<Token>(rng.below(4));
      EXPECT_LT(max_relative_error(policy, s, a), 1e-5);
    }
  }
}

TEST(Gradient, ScoreFunctionHasZeroMean) {
  const TaskSpec task = make_needle_suffix({});
  SoftmaxPolicy policy(make_features({FeatureConfig::Kind::window, 2, true}, task), 4);
  Rng rng(12);
  for (double& x : policy.params()) x = rng.uniform() - 0.5;
  const State s{{0}, {1, 3}};
  const auto p = policy.distribution(s);
  std::vector<double> expected(policy.num_params(), 0.0);
  for (Token a = 0; a < 4; ++a) {
    const auto g = policy.log_prob_and_grad(s, a);
    EXPECT_NEAR(g.log_prob, std::log(p[static_cast<std::size_t>(a)]), 1e-12);
    for (std::size_t i = 0; i < g.gradient.size(); ++i) expected[i] += p[static_cast<std::size_t>(a)] * g.gradient[i];
  }
  for (double x : expected) EXPECT_NEAR(x, 0.0, 1e-12);
}

TEST(Gradient, NonParametricPoliciesThrow) {
  const auto scripted = testing::uniform_policy(3);
  try {
    log_prob_and_grad(*scripted, initial_state({0}), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::non_differentiable_policy);
  }
}

TEST(BlackBox, SamplesOnly) {
  const auto box = BlackBoxPolicy::wrap(testing::constant_policy(3, 1));
  Rng rng(0);
  EXPECT_EQ(box->sample(initial_state({0}), rng), 1);
  EXPECT_FALSE(box->has_distribution());
  EXPECT_EQ(box->kind(), PolicyKind::black_box);
  try {
    box->distribution(initial_state({0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::non_differentiable_policy);
  }
  EXPECT_THROW(box->greedy(initial_state({0})), Error);
  EXPECT_THROW(as_differentiable(*box), Error);
}

TEST(FrozenSnapshot, IgnoresLaterUpdates) {
  const TaskSpec task = make_needle_suffix({});
  SoftmaxPolicy live(make_features({FeatureConfig::Kind::window, 2, true}, task), 4);
  const FrozenSnapshot frozen(live);
  live.params()[0] = 5.0;
  for (double p : frozen.distribution(initial_state({0}))) EXPECT_DOUBLE_EQ(p, 0.25);
  EXPECT_NE(live.distribution(initial_state({0}))[0], 0.25);
  EXPECT_EQ(frozen.kind(), PolicyKind::frozen_snapshot);
}

TEST(Kl, ClosedFormCases) {
  auto fixed = [](std::vector<double> d) {
    return std::make_shared<const ScriptedPolicy>(static_cast<int>(d.size()), [d](const State&) { return d; });
  };
  const State s = initial_state({0});
  EXPECT_EQ(kl_divergence(*fixed({0.3, 0.7}), *fixed({0.3, 0.7}), s), 0.0);
  EXPECT_NEAR(kl_divergence(*fixed({1.0, 0.0}), *fixed({0.5, 0.5}), s), std::log(2.0), 1e-15);
  try {
    kl_divergence(*fixed({0.5, 0.5}), *fixed({1.0, 0.0}), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::support_mismatch);
  }
}

TEST(Kl, NonNegativeOnRandomPairs) {
  Rng rng(21);
  const State s = initial_state({0});
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(5), q(5);
    for (auto* v : {&p, &q}) {
      double total = 0.0;
      for (double& x : *v) total += (x = rng.uniform() + 1e-3);
      for (double& x : *v) x /= total;
    }
    const ScriptedPolicy pp(5, [p](const State&) { return p; }), qq(5, [q](const State&) { return q; });
    EXPECT_GE(kl_divergence(pp, qq, s), 0.0);
  }
}

TEST(Mixture, DegenerateBetasFollowOneComponent) {
  const auto base = testing::uniform_policy(4);
  const auto guide = testing::constant_policy(4, 3);
  const State s = initial_state({0});
  for (auto gran : {Granularity::per_trajectory, Granularity::per_step}) {
    // beta = 0 consumes exactly the random stream of plain sampling.
    Rng a(5), b(5);
    MixtureRollin ctx(MixtureSpec{base.get(), guide.get(), 0.0, gran}, a);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(mixture_sample(ctx, s, a), base->sample(s, b));
    EXPECT_TRUE(a == b);
    Rng c(6), d(6);
    MixtureRollin all_guide(MixtureSpec{base.get(), guide.get(), 1.0, gran}, c);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(mixture_sample(all_guide, s, c), guide->sample(s, d));
    EXPECT_TRUE(c == d);
  }
}

TEST(Mixture, PerTrajectoryGuideFraction) {
  const auto base = testing::uniform_policy(4);
  const auto guide = testing::constant_policy(4, 3);
  Rng rng(9);
  double guided = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    MixtureRollin ctx(MixtureSpec{base.get(), guide.get(), 0.8, Granularity::per_trajectory}, rng);
    guided += ctx.guide_selected() ? 1.0 : 0.0;
  }
  EXPECT_TRUE(within_3sigma(guided, n, 0.8)) << guided;
}

TEST(Mixture, PerStepCoinsAreIndependent) {
  const auto base = testing::constant_policy(2, 0);
  const auto guide = testing::constant_policy(2, 1);
  Rng rng(10);
  MixtureRollin ctx(MixtureSpec{base.get(), guide.get(), 0.3, Granularity::per_step}, rng);
  double ones = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ones += mixture_sample(ctx, initial_state({0}), rng);
  EXPECT_TRUE(within_3sigma(ones, n, 0.3)) << ones;
}

TEST(Mixture, Errors) {
  const auto base = testing::uniform_policy(2);
  Rng rng(0);
  try {
    MixtureRollin bad(MixtureSpec{base.get(), nullptr, 0.5, Granularity::per_step}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_guide);
  }
  try {
    MixtureRollin bad(MixtureSpec{base.get(), base.get(), 1.5, Granularity::per_step}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_argument);
  }
}

TEST(WindowFeatures, Layout) {
  const WindowFeatures f(4, 6, 2, true);
  EXPECT_EQ(f.dim(), 5u * 2 + 4 + 6 + 1);
  const auto phi = f.features(State{{2}, {1}});
  // Last token 1, previous 2, bag {2}, position 1, bias.
  ASSERT_EQ(phi.size(), 5u);
  EXPECT_EQ(phi[0].index, 1u);
  EXPECT_EQ(phi[1].index, 5u + 2);
  EXPECT_EQ(phi[2].index, 10u + 2);
  EXPECT_EQ(phi[3].index, 14u + 1);
  EXPECT_EQ(phi[4].index, 20u);
  EXPECT_THROW(WindowFeatures(4, 6, -1, true), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
  const TaskSpec task = make_needle_suffix({});
  const auto space = needle_space(task);
  Rng rng(30);
  for (auto kind : {FeatureConfig::Kind::tabular, FeatureConfig::Kind::window}) {
    SoftmaxPolicy policy(make_features({kind, 2, true}, task, space), 4);
    for (double& x : policy.params()) x = 10.0 * (rng.uniform() - 0.5);
    std::stringstream buf;
    save_policy(buf, policy);
    const SoftmaxPolicy loaded = load_policy(buf, task, space);
    EXPECT_EQ(loaded.params(), policy.params());
    for (const auto& s : space->states()) {
      const auto a = policy.distribution(s), b = loaded.distribution(s);
      for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LE(std::abs(a[i] - b[i]), 1e-12);
    }
  }
}

TEST(Checkpoint, RejectsForeignFiles) {
  const TaskSpec task = make_needle_suffix({});
  std::istringstream junk("hello world");
  try {
    load_policy(junk, task);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
  std::istringstream future("l2s-policy v9\n");
  try {
    load_policy(future, task);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::schema_version);
  }
  SoftmaxPolicy policy(make_features({FeatureConfig::Kind::window, 2, true}, task), 4);
  std::stringstream buf;
  save_policy(buf, policy);
  try {
    load_policy(buf, testing::needle11());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::mismatched_task);
  }
}

TEST(Adam, SgdStepAndStateRoundTrip) {
  std::vector<double> x{1.0, 2.0};
  Adam sgd(2, AdamConfig{0.5, true});
  sgd.step(x, std::vector<double>{1.0, -2.0});
  EXPECT_DOUBLE_EQ(x[0], 0.5);
  EXPECT_DOUBLE_EQ(x[1], 3.0);

  Adam adam(2, AdamConfig{0.1});
  std::vector<double> y{0.0, 0.0};
  adam.step(y, std::vector<double>{1.0, -1.0});
  // The first bias-corrected Adam step moves each coordinate by the learning rate.
  EXPECT_NEAR(y[0], -0.1, 1e-7);
  EXPECT_NEAR(y[1], 0.1, 1e-7);
  std::stringstream buf;
  adam.serialize(buf);
  Adam copy(2, AdamConfig{0.1});
  copy.deserialize(buf);
  std::vector<double> y2 = y;
  adam.step(y, std::vector<double>{0.3, 0.2});
  copy.step(y2, std::vector<double>{0.3, 0.2});
  EXPECT_EQ(y, y2);
  EXPECT_THROW(adam.step(y, std::vector<double>{1.0}), Error);
}

}  // namespace
}  // namespace l2s
