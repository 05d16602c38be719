// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "l2s/harness/compare.hpp"
#include "l2s/harness/config.hpp"
#include "l2s/harness/experiment.hpp"
#include "l2s/harness/sweep.hpp"
#include "l2s/l2s.hpp"

namespace {

using l2s::Error;
using l2s::ErrorKind;
using nlohmann::json;
namespace fs = std::filesystem;
namespace h = l2s::harness;

enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kConfigParse = 2,
  kIo = 3,
  kAlgorithm = 4,
  kUsage = 64,
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config_parse:
    case ErrorKind::invalid_mode:
      return kConfigParse;
    case ErrorKind::io:
    case ErrorKind::schema_version:
      return kIo;
    default:
      return kAlgorithm;
  }
}

json load_user_config(const std::string& path) { return path.empty() ? json::object() : h::read_json_file(path); }

void print_eval(const h::EvalRecord& e) {
  std::printf("mean %.6f +- %.6f (%zu episodes)\n", e.mean, e.standard_error, e.episodes);
  if (e.exact_value) std::printf("exact %.6f\n", *e.exact_value);
  for (std::size_t b = 0; b < e.bucket_labels.size(); ++b) {
    std::printf("bucket %s %.6f\n", e.bucket_labels[b].c_str(), e.bucket_means[b]);
  }
}

void report_outcome(const h::RunOutcome& outcome) {
  std::printf("run %s: %zu iterations\n", outcome.directory.string().c_str(), outcome.iterations.size());
  if (!outcome.evals.empty()) print_eval(outcome.evals.back());
}

int cmd_train(const std::string& config, const std::vector<std::string>& sets) {
  const json resolved = h::resolve_config_json(load_user_config(config), sets);
  report_outcome(h::run_experiment(resolved));
  return kOk;
}

int cmd_resume(const std::string& run) {
  report_outcome(h::resume_experiment(run));
  return kOk;
}

int cmd_sweep(const std::string& config, const std::string& grid_file, const std::vector<std::string>& sets,
              const std::string& out, int jobs) {
  const json user = load_user_config(config);
  const h::SweepGrid grid = h::parse_grid(h::read_json_file(grid_file));
  fs::path dir = out.empty() ? fs::path(h::resolve_config(user, sets).output_dir) : fs::path(out);
  if (dir.is_relative()) dir = h::output_root() / dir;
  const auto result = h::sweep(user, sets, grid, dir, jobs);
  std::cout << h::sweep_summary_csv(grid, result.cells);
  for (const auto& c : result.cells) {
    if (c.status() != "ok") return kAlgorithm;
  }
  return kOk;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& config, const std::string& task,
                 const std::vector<std::string>& sets, std::size_t episodes, bool exact) {
  std::vector<std::string> overrides;
  if (!task.empty()) overrides.push_back("task.preset=" + json(task).dump());
  overrides.insert(overrides.end(), sets.begin(), sets.end());
  overrides.push_back("eval.episodes=" + std::to_string(episodes));
  if (exact) overrides.push_back("eval.exact=true");
  const h::RunConfig cfg = h::resolve_config(load_user_config(config), overrides);
  h::RunSetup setup = h::prepare_run(cfg);
  const l2s::SoftmaxPolicy policy = l2s::load_policy_file(checkpoint, setup.task, setup.space);
  print_eval(h::evaluate_learner(policy, setup, cfg, 0));
  return kOk;
}

int cmd_oracle(const std::string& config, const std::string& task, const std::vector<std::string>& sets,
               const std::string& out) {
  std::vector<std::string> overrides;
  if (!task.empty()) overrides.push_back("task.preset=" + json(task).dump());
  overrides.insert(overrides.end(), sets.begin(), sets.end());
  const h::RunConfig cfg = h::resolve_config(load_user_config(config), overrides);
  const l2s::TaskSpec spec = h::build_task(cfg.task);
  const l2s::DpSolution sol = l2s::dp_solve(spec);
  if (out.empty() || out == "-") {
    l2s::export_dp_solution(std::cout, sol);
  } else {
    std::ofstream file(out);
    if (!file) throw Error(ErrorKind::io, "cannot write " + out);
    l2s::export_dp_solution(file, sol);
    if (!file) throw Error(ErrorKind::io, "write failed: " + out);
    const auto w = l2s::detail::prompt_weights(spec.dataset);
    double value = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) value += w[i] * sol.initial_value(i);
    std::printf("states %zu, optimal value %.6f, residual %.3g\n", sol.space->size(), value,
                l2s::bellman_residual(sol, spec));
  }
  return kOk;
}

int cmd_compare(const std::vector<std::string>& runs, const std::string& metric, bool buckets,
                const std::string& out) {
  std::vector<fs::path> roots(runs.begin(), runs.end());
  const fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
  const auto table = h::compare(roots, metric, buckets, dir);
  std::cout << h::compare_text(table);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided sequence-generation experiments on synthetic tasks"};
  app.set_version_flag("--version", std::string(l2s::kVersion));
  app.require_subcommand(1);

  std::string config, grid, checkpoint, task, run, metric = "final_return", out;
  std::vector<std::string> sets, runs;
  std::size_t episodes = 256;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool buckets = false, exact = false;

  auto* train = app.add_subcommand("train", "Train one configuration");
  train->add_option("--config", config, "JSON config file");
  train->add_option("--set", sets, "Override, e.g. algo.mode=d2lols");

  auto* sweep = app.add_subcommand("sweep", "Run a grid of configurations over seeds");
  sweep->add_option("--config", config, "Base JSON config file");
  sweep->add_option("--grid", grid, "Grid file")->required();
  sweep->add_option("--set", sets, "Override applied to every cell");
  sweep->add_option("--out", out, "Sweep directory (default: the config's output_dir)");
  sweep->add_option("-j,--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  auto* evaluate = app.add_subcommand("evaluate", "Monte-Carlo evaluation of a saved policy");
  evaluate->add_option("--checkpoint", checkpoint, "Policy file")->required();
  evaluate->add_option("--task", task, "Task preset");
  evaluate->add_option("--config", config, "Config file supplying the task");
  evaluate->add_option("--set", sets, "Override");
  evaluate->add_option("-n,--episodes", episodes, "Episodes")->check(CLI::PositiveNumber);
  evaluate->add_flag("--exact", exact, "Also compute the exact value when the task is enumerable");

  auto* oracle = app.add_subcommand("oracle", "Dump the exact optimal solution of a task");
  oracle->add_option("--task", task, "Task preset");
  oracle->add_option("--config", config, "Config file supplying the task");
  oracle->add_option("--set", sets, "Override");
  oracle->add_option("--out", out, "Output file (default: stdout)");

  auto* compare = app.add_subcommand("compare", "Tabulate and plot finished runs");
  compare->add_option("--runs", runs, "Run or sweep directories")->required();
  compare->add_option("--metric", metric, "final_return, best_return, mean_eval_return, exact_value, gap, ...");
  compare->add_flag("--buckets", buckets, "Append per-bucket columns");
  compare->add_option("--out", out, "Directory for compare.csv, compare.txt and plots");

  auto* resume = app.add_subcommand("resume", "Continue a run from its latest checkpoint");
  resume->add_option("--run", run, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(config, sets);
    if (*sweep) return cmd_sweep(config, grid, sets, out, jobs);
    if (*evaluate) return cmd_evaluate(checkpoint, config, task, sets, episodes, exact);
    if (*oracle) return cmd_oracle(config, task, sets, out);
    if (*compare) return cmd_compare(runs, metric, buckets, out);
    if (*resume) return cmd_resume(run);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: io: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
  return kOther;
}
