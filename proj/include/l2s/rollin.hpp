// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "l2s/error.hpp"
#include "l2s/mdp.hpp"
#include "l2s/policy.hpp"
#include "l2s/rng.hpp"
#include "l2s/value.hpp"

namespace l2s {

enum class AdvantageSource { learner, guide };

/// How the one-step deviation action at a restart state is chosen.
enum class DeviationMode { rollout_policy, uniform, learner };

inline const char* to_string(AdvantageSource s) { return s == AdvantageSource::learner ? "learner" : "guide"; }

inline const char* to_string(DeviationMode m) {
  switch (m) {
    case DeviationMode::rollout_policy: return "rollout";
    case DeviationMode::uniform: return "uniform";
    case DeviationMode::learner: return "learner";
  }
  return "unknown";
}

struct RollConfig {
  /// Probability that the guide (rather than the learner) acts during rollin.
  double rollin_guide_weight = 0.0;
  Granularity granularity = Granularity::per_trajectory;
  AdvantageSource source = AdvantageSource::learner;
  DeviationMode deviation = DeviationMode::rollout_policy;
  int restarts_per_rollin = 1;
  int guide_mc_rollouts = 1;
  /// Guide source: estimate V^g(s) by Monte-Carlo rollouts instead of the
  /// fitted guide value function.
  bool mc_guide_value = false;
  /// Guide source: reweight deviation actions to the learner's distribution.
  /// Needs the guide's distribution when the rollout policy deviates.
  bool importance_correction = false;
  GaeConfig gae;
  double beta_kl = 0.0;
  /// Worker threads for collection; results do not depend on it.
  int workers = 1;
};

struct BatchEntry {
  State state;
  Token action = 0;
  double advantage = 0.0;
  double old_log_prob = 0.0;
  /// Learner source: GAE value target. Guide source: the Q estimate.
  double value_target = 0.0;
  /// Guide source: pi_old(a|s) / q(a|s) for the deviation distribution q,
  /// so the update targets actions drawn from the learner. 1 otherwise.
  double importance = 1.0;
};

struct BatchStats {
  std::size_t rollins = 0;
  std::size_t guide_rollins = 0;
  double rollin_return = 0.0;  // mean raw return of rollin trajectories
  double mean_return = 0.0;    // mean raw return of the scored segments
  double shaped_return = 0.0;  // mean shaped return of the scored segments
  double mean_kl = 0.0;        // mean per-token log-ratio to the reference
};

struct AdvantageBatch {
  AdvantageSource source = AdvantageSource::learner;
  int iteration = 0;
  std::vector<BatchEntry> entries;
  /// Regression samples for the value function matching the source.
  std::vector<ValueSample> value_samples;
  BatchStats stats;
  /// Visited rollin states (for diagnostics).
  std::vector<State> rollin_states;
};

/// Generates one trajectory from `start` with the rollin mixture, recording
/// the learner's log-probability at every step whichever component acted.
inline Trajectory collect_rollin(const MixtureSpec& mix, const SoftmaxPolicy& learner, const State& start,
                                 const TaskSpec& task, Rng& rng) {
  Trajectory traj{start, {}, 0.0};
  MixtureRollin context(mix, rng);
  State s = start;
  while (!is_terminal(s, task)) {
    const bool guide = context.choose_guide(rng);
    const Policy& actor = guide ? *mix.guide : *mix.base;
    const auto logits = learner.logits(s);
    Token a;
    if (&actor == &learner) {
      a = sample_categorical(softmax(logits), rng);
    } else {
      a = actor.sample(s, rng);
    }
    State next = transition(s, a, task);
    const double r = task.reward(s, a, next);
    traj.steps.push_back({s, a, r, r, log_softmax_at(logits, static_cast<std::size_t>(a)), guide});
    s = std::move(next);
  }
  traj.recompute_total();
  return traj;
}

inline Trajectory collect_rollin(const Policy& policy, const SoftmaxPolicy& learner, const State& start,
                                 const TaskSpec& task, Rng& rng) {
  return collect_rollin(MixtureSpec{&policy, nullptr, 0.0, Granularity::per_trajectory}, learner, start, task, rng);
}

inline std::vector<std::size_t> sample_restart_indices(const Trajectory& traj, Rng& rng, std::size_t n) {
  if (traj.empty()) throw Error(ErrorKind::invalid_argument, "cannot restart on an empty trajectory");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<std::size_t>(rng.below(traj.size())));
  return out;
}

/// n states drawn uniformly (with replacement) from s_0..s_{T-1}.
inline std::vector<State> sample_restart(const Trajectory& traj, Rng& rng, std::size_t n) {
  std::vector<State> out;
  for (std::size_t i : sample_restart_indices(traj, rng, n)) out.push_back(traj.steps[i].state);
  return out;
}

struct RolloutResult {
  Token deviation = 0;
  Trajectory suffix;
  double return_to_go = 0.0;
};

/// Restarts at `start`, takes the deviation action, then follows `rollout`
/// to termination. If `learner` is given its log-probabilities are recorded.
inline RolloutResult rollout_from(const Policy& rollout, const State& start, const TaskSpec& task, Rng& rng,
                                  DeviationMode deviation, const SoftmaxPolicy* learner = nullptr) {
  if (is_terminal(start, task)) throw Error(ErrorKind::terminal_start, "rollout from a terminal state");
  RolloutResult out;
  out.suffix.initial = start;
  State s = start;
  bool first = true;
  while (!is_terminal(s, task)) {
    Token a;
    double lp = 0.0;
    const bool learner_acts = learner && (&rollout == learner || (first && deviation == DeviationMode::learner));
    if (first && deviation == DeviationMode::uniform) {
      a = static_cast<Token>(rng.below(static_cast<std::uint64_t>(task.vocab_size)));
      if (learner) lp = learner->log_prob(s, a);
    } else if (learner_acts) {
      const auto logits = learner->logits(s);
      a = sample_categorical(softmax(logits), rng);
      lp = log_softmax_at(logits, static_cast<std::size_t>(a));
    } else {
      if (first && deviation == DeviationMode::learner) {
        throw Error(ErrorKind::invalid_argument, "learner deviation needs the learner policy");
      }
      a = rollout.sample(s, rng);
      if (learner) lp = learner->log_prob(s, a);
    }
    if (first) out.deviation = a;
    State next = transition(s, a, task);
    const double r = task.reward(s, a, next);
    out.suffix.steps.push_back({s, a, r, r, lp, &rollout != learner && !learner_acts});
    out.return_to_go += r;
    s = std::move(next);
    first = false;
  }
  out.suffix.recompute_total();
  return out;
}

/// Return of taking `action` at `state` and then following `policy`.
inline double action_return(const Policy& policy, const State& state, Token action, const TaskSpec& task, Rng& rng) {
  State next = transition(state, action, task);
  double total = task.reward(state, action, next);
  State s = std::move(next);
  while (!is_terminal(s, task)) {
    const Token a = policy.sample(s, rng);
    State n2 = transition(s, a, task);
    total += task.reward(s, a, n2);
    s = std::move(n2);
  }
  return total;
}

/// Q^g(s,a) - V^g(s): Q from `mc` rollouts after taking `action`; V from the
/// fitted guide value if given, otherwise from `mc` guide rollouts from s.
inline double estimate_guide_advantage(const State& state, Token action, const Policy& guide,
                                       const ValueFunction* guide_value, const TaskSpec& task, Rng& rng, int mc) {
  if (mc < 1) throw Error(ErrorKind::invalid_argument, "need at least one Monte-Carlo rollout");
  double q = 0.0;
  for (int k = 0; k < mc; ++k) q += action_return(guide, state, action, task, rng);
  q /= mc;
  double v = 0.0;
  if (guide_value) {
    v = guide_value->value(state);
  } else {
    for (int k = 0; k < mc; ++k) v += action_return(guide, state, guide.sample(state, rng), task, rng);
    v /= mc;
  }
  return q - v;
}

namespace detail {

/// KL shaping applies to the tokens the learner chose. Guide-sampled steps
/// keep their raw reward: log(pi/pi_ref) on guide tokens does not estimate
/// the learner's KL and would reward pushing the guide's tokens down. With
/// `deviation_first`, the first step is the scored deviation and is shaped.
inline void shape_in_place(Trajectory& traj, const SoftmaxPolicy& learner, const Policy* reference,
                           double beta_kl, double& kl_sum, std::size_t& kl_count, bool deviation_first = false) {
  for (auto& step : traj.steps) step.shaped_reward = step.raw_reward;
  if (beta_kl != 0.0 && reference) {
    KlConfig kl;
    kl.beta_kl = beta_kl;
    const auto shaped = shaped_rewards(traj, learner, *reference, kl);
    for (std::size_t t = 0; t < traj.size(); ++t) {
      if (traj.steps[t].guide_acted && !(deviation_first && t == 0)) continue;
      kl_sum += (traj.steps[t].raw_reward - shaped[t]) / beta_kl;
      ++kl_count;
      traj.steps[t].shaped_reward = shaped[t];
    }
  }
  traj.recompute_total();
}

struct SlotResult {
  std::vector<BatchEntry> entries;
  std::vector<ValueSample> value_samples;
  std::vector<State> rollin_states;
  bool guide_rollin = false;
  double rollin_return = 0.0;
  double segment_return = 0.0;
  double segment_shaped = 0.0;
  std::size_t segments = 0;
  double kl_sum = 0.0;
  std::size_t kl_count = 0;
};

struct BatchContext {
  const RollConfig& cfg;
  const SoftmaxPolicy& learner;
  const ValueFunction* learner_value;
  const Policy* guide;
  const ValueFunction* guide_value;
  const Policy* reference;
  const TaskSpec& task;
};

inline void score_learner_segment(const BatchContext& ctx, Trajectory segment, SlotResult& out) {
  shape_in_place(segment, ctx.learner, ctx.reference, ctx.cfg.beta_kl, out.kl_sum, out.kl_count);
  std::vector<double> rewards, values;
  for (const auto& step : segment.steps) {
    rewards.push_back(step.shaped_reward);
    values.push_back(ctx.learner_value ? ctx.learner_value->value(step.state) : 0.0);
  }
  values.push_back(0.0);
  const auto gae = gae_advantages(rewards, values, ctx.cfg.gae);
  for (std::size_t t = 0; t < segment.size(); ++t) {
    const auto& step = segment.steps[t];
    out.entries.push_back({step.state, step.action, gae.advantages[t], step.learner_log_prob, gae.value_targets[t]});
    out.value_samples.push_back({step.state, gae.value_targets[t]});
  }
  out.segment_return += segment.raw_return();
  out.segment_shaped += segment.total_return;
  ++out.segments;
}

/// Learner-advantage data path: mixture rollin; if the guide acted anywhere,
/// restart uniformly along the rollin and let the learner complete it;
/// otherwise the rollin itself is the on-policy segment.
inline SlotResult learner_slot(const BatchContext& ctx, const State& prompt, Rng& rng) {
  SlotResult out;
  const MixtureSpec mix{&ctx.learner, ctx.guide, ctx.cfg.rollin_guide_weight, ctx.cfg.granularity};
  Trajectory rollin = collect_rollin(mix, ctx.learner, prompt, ctx.task, rng);
  out.rollin_return = rollin.raw_return();
  for (const auto& step : rollin.steps) out.rollin_states.push_back(step.state);
  out.guide_rollin = std::any_of(rollin.steps.begin(), rollin.steps.end(), [](const auto& s) { return s.guide_acted; });
  if (!out.guide_rollin) {
    score_learner_segment(ctx, std::move(rollin), out);
    return out;
  }
  const auto restarts = sample_restart_indices(rollin, rng, static_cast<std::size_t>(ctx.cfg.restarts_per_rollin));
  for (std::size_t h : restarts) {
    auto result = rollout_from(ctx.learner, rollin.steps[h].state, ctx.task, rng, ctx.cfg.deviation, &ctx.learner);
    score_learner_segment(ctx, std::move(result.suffix), out);
  }
  return out;
}

/// Guide-advantage data path: mixture rollin, uniform restarts, one-step
/// deviation, guide rollouts to score it.
inline SlotResult guide_slot(const BatchContext& ctx, const State& prompt, Rng& rng) {
  SlotResult out;
  const Policy& guide = *ctx.guide;
  const MixtureSpec mix{&ctx.learner, ctx.guide, ctx.cfg.rollin_guide_weight, ctx.cfg.granularity};
  Trajectory rollin = collect_rollin(mix, ctx.learner, prompt, ctx.task, rng);
  out.rollin_return = rollin.raw_return();
  for (const auto& step : rollin.steps) out.rollin_states.push_back(step.state);
  out.guide_rollin = std::any_of(rollin.steps.begin(), rollin.steps.end(), [](const auto& s) { return s.guide_acted; });
  const auto restarts = sample_restart_indices(rollin, rng, static_cast<std::size_t>(ctx.cfg.restarts_per_rollin));
  for (std::size_t h : restarts) {
    const State& s = rollin.steps[h].state;
    double q = 0.0;
    Token action = 0;
    for (int k = 0; k < ctx.cfg.guide_mc_rollouts; ++k) {
      RolloutResult r;
      if (k == 0) {
        r = rollout_from(guide, s, ctx.task, rng, ctx.cfg.deviation, &ctx.learner);
        action = r.deviation;
      } else {
        // Later rollouts repeat the same deviation action.
        r.suffix.initial = s;
        State next = transition(s, action, ctx.task);
        const double rew = ctx.task.reward(s, action, next);
        r.suffix.steps.push_back({s, action, rew, rew, ctx.learner.log_prob(s, action), false});
        if (!is_terminal(next, ctx.task)) {
          auto tail = rollout_from(guide, next, ctx.task, rng, DeviationMode::rollout_policy,
                                   ctx.cfg.beta_kl != 0.0 ? &ctx.learner : nullptr);
          for (auto& st : tail.suffix.steps) r.suffix.steps.push_back(std::move(st));
        }
        r.deviation = action;
      }
      shape_in_place(r.suffix, ctx.learner, ctx.reference, ctx.cfg.beta_kl, out.kl_sum, out.kl_count, true);
      q += r.suffix.total_return;
      out.segment_return += r.suffix.raw_return();
      out.segment_shaped += r.suffix.total_return;
      ++out.segments;
      // Guide-value regression targets: every suffix state after the deviation.
      double to_go = r.suffix.total_return;
      for (std::size_t t = 0; t < r.suffix.size(); ++t) {
        if (t > 0) out.value_samples.push_back({r.suffix.steps[t].state, to_go});
        to_go -= r.suffix.steps[t].shaped_reward;
      }
    }
    q /= ctx.cfg.guide_mc_rollouts;
    if (ctx.cfg.deviation == DeviationMode::rollout_policy) out.value_samples.push_back({s, q});
    double v = 0.0;
    if (ctx.cfg.mc_guide_value || !ctx.guide_value) {
      for (int k = 0; k < ctx.cfg.guide_mc_rollouts; ++k) {
        v += action_return(guide, s, guide.sample(s, rng), ctx.task, rng);
      }
      v /= ctx.cfg.guide_mc_rollouts;
    } else {
      v = ctx.guide_value->value(s);
    }
    const double old_lp = ctx.learner.log_prob(s, action);
    double importance = 1.0;
    if (ctx.cfg.importance_correction) {
      if (ctx.cfg.deviation == DeviationMode::uniform) {
        importance = std::exp(old_lp) * static_cast<double>(ctx.task.vocab_size);
      } else if (ctx.cfg.deviation == DeviationMode::rollout_policy && guide.has_distribution()) {
        importance = std::exp(old_lp) / guide.distribution(s)[static_cast<std::size_t>(action)];
      }
    }
    out.entries.push_back({s, action, q - v, old_lp, q, importance});
  }
  return out;
}

}  // namespace detail

/// Assembles one iteration's batch from the given prompts. Every prompt slot
/// gets its own stream seeded from `rng` in order, so results are identical
/// for any number of workers.
inline AdvantageBatch collect_batch(const RollConfig& cfg, const SoftmaxPolicy& learner,
                                    const ValueFunction* learner_value, const Policy* guide,
                                    const ValueFunction* guide_value, const Policy* reference, const TaskSpec& task,
                                    std::span<const State> prompts, Rng& rng) {
  if (cfg.restarts_per_rollin < 1) throw Error(ErrorKind::invalid_argument, "restarts_per_rollin must be >= 1");
  if (cfg.guide_mc_rollouts < 1) throw Error(ErrorKind::invalid_argument, "guide_mc_rollouts must be >= 1");
  if ((cfg.source == AdvantageSource::guide || cfg.rollin_guide_weight > 0.0) && !guide) {
    throw Error(ErrorKind::missing_guide, "this configuration needs a guide policy");
  }
  if (cfg.beta_kl != 0.0 && !reference) {
    throw Error(ErrorKind::invalid_argument, "KL shaping needs a reference policy");
  }
  const detail::BatchContext ctx{cfg, learner, learner_value, guide, guide_value, reference, task};
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < prompts.size(); ++i) seeds.push_back(rng.next_u64());

  std::vector<detail::SlotResult> slots(prompts.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng slot_rng(seeds[i]);
      slots[i] = cfg.source == AdvantageSource::learner ? detail::learner_slot(ctx, prompts[i], slot_rng)
                                                        : detail::guide_slot(ctx, prompts[i], slot_rng);
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(cfg.workers, prompts.size()));
  if (workers == 1) {
    work(0, prompts.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (prompts.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk, e = std::min(prompts.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& t : pool) t.join();
  }

  AdvantageBatch batch;
  batch.source = cfg.source;
  double kl_sum = 0.0;
  std::size_t kl_count = 0, segments = 0;
  for (auto& slot : slots) {
    for (auto& e : slot.entries) batch.entries.push_back(std::move(e));
    for (auto& v : slot.value_samples) batch.value_samples.push_back(std::move(v));
    for (auto& s : slot.rollin_states) batch.rollin_states.push_back(std::move(s));
    batch.stats.rollins += 1;
    batch.stats.guide_rollins += slot.guide_rollin ? 1 : 0;
    batch.stats.rollin_return += slot.rollin_return;
    batch.stats.mean_return += slot.segment_return;
    batch.stats.shaped_return += slot.segment_shaped;
    segments += slot.segments;
    kl_sum += slot.kl_sum;
    kl_count += slot.kl_count;
  }
  if (batch.stats.rollins) batch.stats.rollin_return /= static_cast<double>(batch.stats.rollins);
  if (segments) {
    batch.stats.mean_return /= static_cast<double>(segments);
    batch.stats.shaped_return /= static_cast<double>(segments);
  }
  batch.stats.mean_kl = kl_count ? kl_sum / static_cast<double>(kl_count) : 0.0;
  return batch;
}

/// Draws n prompts then collects a batch from them.
inline AdvantageBatch collect_batch(const RollConfig& cfg, const SoftmaxPolicy& learner,
                                    const ValueFunction* learner_value, const Policy* guide,
                                    const ValueFunction* guide_value, const Policy* reference, const TaskSpec& task,
                                    const PromptDataset& dataset, std::size_t n_prompts, Rng& rng) {
  std::vector<State> prompts;
  for (std::size_t i = 0; i < n_prompts; ++i) prompts.push_back(sample_prompt(dataset, rng));
  return collect_batch(cfg, learner, learner_value, guide, guide_value, reference, task, prompts, rng);
}

/// Recomputes guide advantages after the guide value function was refitted.
inline void refresh_guide_advantages(AdvantageBatch& batch, const ValueFunction& guide_value) {
  for (auto& e : batch.entries) e.advantage = e.value_target - guide_value.value(e.state);
}

}  // namespace l2s
