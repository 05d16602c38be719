// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "l2s/algorithms.hpp"
#include "l2s/checkpoint.hpp"
#include "l2s/error.hpp"
#include "l2s/harness/config.hpp"
#include "l2s/harness/runlog.hpp"
#include "l2s/oracle.hpp"

namespace l2s::harness {

namespace fs = std::filesystem;

inline constexpr const char* kOutputRootEnv = "L2S_OUTPUT_ROOT";

/// Output root: $L2S_OUTPUT_ROOT if set, else the working directory.
inline fs::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? fs::path(env) : fs::current_path();
}

inline fs::path run_directory(const RunConfig& cfg) {
  const fs::path p(cfg.output_dir);
  return p.is_absolute() ? p : output_root() / p;
}

/// Everything built from a config before training starts.
struct RunSetup {
  TaskSpec task;
  std::shared_ptr<const StateSpace> space;
  PolicyPtr guide;
  std::optional<SoftmaxPolicy> learner;
  std::optional<DifficultyBuckets> buckets;
};

inline RunSetup prepare_run(const RunConfig& cfg) {
  RunSetup s;
  s.task = build_task(cfg.task);
  s.space = try_state_space(s.task);
  s.guide = build_guide(cfg.guide, s.task, s.space, cfg.learner, cfg.seed);
  s.learner.emplace(build_learner(cfg.learner, s.task, s.space));
  const std::size_t k = std::min(cfg.eval.buckets, s.task.dataset.size());
  if (k >= 2) {
    std::string by = cfg.eval.bucket_by;
    if (by == "auto") by = s.guide ? "guide" : "difficulty";
    std::vector<double> scores;
    if (by == "guide" && s.guide) {
      if (s.space && s.guide->has_distribution()) {
        scores = policy_value_exact(*s.guide, s.task, s.space).initial;
      } else {
        Rng rng = Rng::stream(cfg.seed, "buckets");
        scores = mc_evaluate(*s.guide, s.task, cfg.eval.bucket_episodes, rng).per_prompt;
      }
    } else if (by == "difficulty" && s.task.difficulty) {
      for (const auto& p : s.task.dataset.prompts) scores.push_back(s.task.difficulty(initial_state(p)));
    }
    if (!scores.empty()) s.buckets = difficulty_buckets(scores, k);
  }
  return s;
}

/// MC evaluation with a stream keyed by the iteration, so the result does
/// not depend on evaluation cadence or on resuming.
inline EvalRecord evaluate_learner(const SoftmaxPolicy& policy, const RunSetup& setup, const RunConfig& cfg,
                                   int iteration) {
  Rng rng = Rng::stream(cfg.seed, "eval:" + std::to_string(iteration));
  const auto mc = mc_evaluate(policy, setup.task, cfg.eval.episodes, rng, cfg.eval.greedy);
  EvalRecord e;
  e.iteration = iteration;
  e.mean = mc.mean;
  e.standard_error = mc.standard_error.value_or(0.0);
  e.episodes = mc.rollouts;
  if (cfg.eval.exact && setup.space) e.exact_value = policy_value_exact(policy, setup.task, setup.space).mean_initial;
  if (setup.buckets) {
    e.bucket_labels = setup.buckets->labels;
    e.bucket_means = setup.buckets->bucket_means(mc.per_prompt);
    e.gap = setup.buckets->gap(mc.per_prompt);
  }
  return e;
}

struct RunOutcome {
  fs::path directory;
  std::vector<IterationStats> iterations;
  std::vector<EvalRecord> evals;
  bool finished = false;
};

namespace detail {

inline fs::path state_path(const fs::path& dir, int iteration) {
  return dir / "checkpoints" / ("iter_" + std::to_string(iteration) + ".state");
}
inline fs::path policy_path(const fs::path& dir, int iteration) {
  return dir / "checkpoints" / ("iter_" + std::to_string(iteration) + ".policy");
}

inline void write_checkpoint(const fs::path& dir, const Trainer& trainer) {
  const int t = trainer.iteration();
  save_policy_file(policy_path(dir, t).string(), trainer.learner());
  const auto tmp = state_path(dir, t).string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorKind::io, "cannot write " + tmp);
    trainer.save_state(out);
    if (!out) throw Error(ErrorKind::io, "write failed: " + tmp);
  }
  fs::rename(tmp, state_path(dir, t));
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

inline std::string csv_number(std::optional<double> x) {
  if (!x) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", *x);
  return buf;
}

inline void write_results(const fs::path& dir, const RunConfig& cfg, const std::vector<EvalRecord>& evals,
                          int iterations) {
  std::ostringstream out;
  const EvalRecord* last = evals.empty() ? nullptr : &evals.back();
  std::optional<double> best;
  for (const auto& e : evals) best = best ? std::max(*best, e.mean) : e.mean;
  out << "name,preset,mode,seed,iterations,final_mean,final_se,best_mean,exact_value,gap";
  if (last) {
    for (const auto& label : last->bucket_labels) out << ",bucket_" << label;
  }
  out << '\n';
  out << cfg.name << ',' << cfg.task.preset << ',' << to_string(cfg.algo.mode) << ',' << cfg.seed << ',' << iterations
      << ',' << csv_number(last ? std::optional<double>(last->mean) : std::nullopt) << ','
      << csv_number(last ? std::optional<double>(last->standard_error) : std::nullopt) << ',' << csv_number(best)
      << ',' << csv_number(last ? last->exact_value : std::nullopt) << ',' << csv_number(last ? last->gap : std::nullopt);
  if (last) {
    for (double m : last->bucket_means) out << ',' << csv_number(m);
  }
  out << '\n';
  write_text(dir / "results.csv", out.str());
}

inline EvalRecord eval_from_json(const json& j) {
  EvalRecord e;
  e.iteration = j.at("iteration").get<int>();
  e.mean = j.at("mean").get<double>();
  e.standard_error = j.at("se").get<double>();
  e.episodes = j.at("episodes").get<std::size_t>();
  if (!j.at("exact_value").is_null()) e.exact_value = j.at("exact_value").get<double>();
  e.bucket_labels = j.at("bucket_labels").get<std::vector<std::string>>();
  e.bucket_means = j.at("bucket_means").get<std::vector<double>>();
  if (!j.at("gap").is_null()) e.gap = j.at("gap").get<double>();
  return e;
}

/// Runs the trainer from its current iteration, appending to the log.
inline RunOutcome drive(const fs::path& dir, const RunConfig& cfg, const RunSetup& setup, Trainer& trainer,
                        LogWriter& log, std::vector<EvalRecord> evals, std::optional<int> stop_after) {
  RunOutcome outcome;
  outcome.directory = dir;
  outcome.evals = std::move(evals);
  int steps = 0;
  while (!trainer.done()) {
    if (stop_after && steps >= *stop_after) return outcome;
    const IterationStats stats = trainer.step();
    ++steps;
    log.write(to_json(stats));
    outcome.iterations.push_back(stats);
    const int t = trainer.iteration();
    if ((cfg.eval.every > 0 && t % cfg.eval.every == 0) || trainer.done()) {
      outcome.evals.push_back(evaluate_learner(trainer.learner(), setup, cfg, t));
      log.write(to_json(outcome.evals.back()));
    }
    if ((cfg.checkpoint.every > 0 && t % cfg.checkpoint.every == 0) || trainer.done()) write_checkpoint(dir, trainer);
  }
  save_policy_file((dir / "checkpoints" / "final.policy").string(), trainer.learner());
  write_results(dir, cfg, outcome.evals, trainer.iteration());
  outcome.finished = true;
  return outcome;
}

}  // namespace detail

/// Runs one configuration into `dir` (default: the config's output
/// directory under the output root). `stop_after` limits the number of
/// iterations executed in this call, leaving a resumable run.
inline RunOutcome run_experiment(const json& resolved, std::optional<fs::path> dir = std::nullopt,
                                 std::optional<int> stop_after = std::nullopt) {
  const RunConfig cfg = run_config_from_json(resolved);
  const fs::path out = dir ? *dir : run_directory(cfg);
  std::error_code ec;
  fs::create_directories(out / "checkpoints", ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + out.string() + ": " + ec.message());
  detail::write_text(out / "config.json", resolved.dump(2) + "\n");
  const RunSetup setup = prepare_run(cfg);
  Trainer trainer(cfg.algo, setup.task, *setup.learner, setup.guide, cfg.seed, setup.space);
  LogWriter log((out / "log.jsonl").string(), false);
  json header = header_record(resolved);
  log.write(header);
  return detail::drive(out, cfg, setup, trainer, log, {}, stop_after);
}

/// Latest cadenced checkpoint iteration in a run directory.
inline std::optional<int> latest_checkpoint(const fs::path& dir) {
  std::optional<int> best;
  const std::regex pattern(R"(iter_(\d+)\.state)");
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir / "checkpoints", ec)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      const int t = std::stoi(m[1]);
      best = best ? std::max(*best, t) : t;
    }
  }
  return best;
}

/// Continues an interrupted run from its latest checkpoint (or from the
/// start when there is none). The log is truncated to the checkpoint.
inline RunOutcome resume_experiment(const fs::path& dir, std::optional<int> stop_after = std::nullopt) {
  const json resolved = read_json_file((dir / "config.json").string());
  const RunConfig cfg = run_config_from_json(resolved);
  const RunSetup setup = prepare_run(cfg);
  Trainer trainer(cfg.algo, setup.task, *setup.learner, setup.guide, cfg.seed, setup.space);
  const auto ckpt = latest_checkpoint(dir);
  if (!ckpt) return run_experiment(resolved, dir, stop_after);
  {
    std::ifstream in(detail::state_path(dir, *ckpt));
    if (!in) throw Error(ErrorKind::io, "cannot open checkpoint state");
    trainer.load_state(in);
  }
  const RunLog old = read_log((dir / "log.jsonl").string());
  if (old.header.at("version") != kVersion) {
    throw Error(ErrorKind::schema_version, "run was produced by " + old.header.at("version").get<std::string>());
  }
  std::vector<EvalRecord> evals;
  LogWriter log((dir / "log.jsonl").string(), false);
  log.write(old.header);
  // Records are interleaved: iteration t, then its eval (iteration t + 1).
  std::size_t e = 0;
  for (const auto& rec : old.iterations) {
    const int t = rec.at("iteration").get<int>();
    if (t >= *ckpt) break;
    log.write(rec);
    while (e < old.evals.size() && old.evals[e].at("iteration").get<int>() <= t + 1) {
      log.write(old.evals[e]);
      evals.push_back(detail::eval_from_json(old.evals[e]));
      ++e;
    }
  }
  return detail::drive(dir, cfg, setup, trainer, log, std::move(evals), stop_after);
}

}  // namespace l2s::harness
