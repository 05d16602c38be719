// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "l2s/harness/compare.hpp"
#include "l2s/harness/experiment.hpp"
#include "l2s/harness/sweep.hpp"

namespace l2s::harness {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("l2s_harness_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json quick_config(int iterations = 4) {
  return json{{"algo", {{"mode", "ppo_plus"}, {"iterations", iterations}, {"rollins_per_iteration", 4}}},
              {"eval", {{"every", 2}, {"episodes", 8}}}};
}

TEST(Config, DefaultsRoundTrip) {
  const json resolved = resolve_config_json(json::object());
  const RunConfig cfg = run_config_from_json(resolved);
  EXPECT_EQ(to_json(cfg), resolved);
  EXPECT_EQ(cfg.task.preset, "needle_suffix.tiny");
  EXPECT_EQ(cfg.learner.features.kind, FeatureConfig::Kind::tabular);
}

TEST(Config, LargeTasksDefaultToHeuristicGuide) {
  const RunConfig cfg = resolve_config(json{{"task", {{"preset", "positive_continuation.small"}}}});
  EXPECT_EQ(cfg.guide.kind, "heuristic");
  EXPECT_EQ(cfg.learner.features.kind, FeatureConfig::Kind::window);
}

TEST(Config, OverridesApplyAfterTheFile) {
  const RunConfig cfg = resolve_config(json{{"algo", {{"mode", "ppo"}}}}, {"algo.mode=d2lols", "algo.alpha=0.3", "seed=9"});
  EXPECT_EQ(cfg.algo.mode, Mode::d2lols);
  EXPECT_EQ(cfg.algo.alpha, 0.3);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(resolve_config({}, {"name=plain"}).name, "plain");
}

TEST(Config, RejectsBadInput) {
  auto kind_of = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::mismatched_task;
  };
  EXPECT_EQ(kind_of([] { resolve_config(json{{"algo", {{"colour", 1}}}}); }), ErrorKind::config_parse);
  EXPECT_EQ(kind_of([] { resolve_config({}, {"algo.mode=sarsa"}); }), ErrorKind::invalid_mode);
  EXPECT_EQ(kind_of([] { resolve_config({}, {"algo.iterations=\"many\""}); }), ErrorKind::config_parse);
  EXPECT_EQ(kind_of([] { resolve_config({}, {"no_equals"}); }), ErrorKind::config_parse);
  EXPECT_EQ(kind_of([] { resolve_config({}, {"task.preset=\"maze.tiny\""}); }), ErrorKind::config_parse);
  EXPECT_EQ(kind_of([] { resolve_config({}, {"algo.ppo_plus_beta=1.5"}); }), ErrorKind::config_parse);
  EXPECT_EQ(kind_of([] { read_json_file("/nonexistent/config.json"); }), ErrorKind::io);
}

TEST(Presets, AllBuildAndTinyOnesFitTheOracle) {
  for (const auto& name : preset_names()) {
    const TaskSpec task = build_task(TaskConfig{name, preset_params(name)});
    EXPECT_FALSE(task.dataset.prompts.empty()) << name;
    if (name.find(".tiny") != std::string::npos) {
      EXPECT_LE(StateSpace::required_nodes(task), StateSpace::default_budget) << name;
    }
  }
}

TEST(Presets, FrozenOptimalValue) {
  const TaskSpec task = build_task(TaskConfig{"positive_continuation.tiny", preset_params("positive_continuation.tiny")});
  const auto sol = dp_solve(task);
  EXPECT_EQ(sol.space->size(), 777u);
  EXPECT_NEAR(sol.initial_value(0), 0.97420797732836029, 1e-12);
  EXPECT_NEAR(sol.initial_value(1), 0.91440057411533993, 1e-12);
  EXPECT_NEAR(sol.initial_value(2), 0.90994985281669627, 1e-12);
  EXPECT_LE(bellman_residual(sol, task), 1e-12);
}

TEST(Log, SingleIterationRun) {
  TempDir tmp;
  const auto outcome = run_experiment(resolve_config_json(quick_config(1)), tmp.path());
  EXPECT_TRUE(outcome.finished);
  const RunLog log = read_log((tmp.path() / "log.jsonl").string());
  EXPECT_EQ(log.iterations.size(), 1u);
  EXPECT_GE(log.evals.size(), 1u);
  EXPECT_EQ(log.header.at("version"), kVersion);
  EXPECT_EQ(log.config(), resolve_config_json(quick_config(1)));
  EXPECT_TRUE(fs::exists(tmp.path() / "results.csv"));
  EXPECT_TRUE(fs::exists(tmp.path() / "checkpoints" / "final.policy"));
}

TEST(Log, SchemaVersionIsChecked) {
  EXPECT_EQ(parse_record(R"({"schema":1,"type":"eval"})").at("type"), "eval");
  for (const char* bad : {R"({"schema":2,"type":"eval"})", R"({"type":"eval"})"}) {
    try {
      parse_record(bad);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::schema_version);
    }
  }
  EXPECT_THROW(parse_record("not json"), Error);
}

TEST(Log, PartialTrailingLineIsIgnored) {
  TempDir tmp;
  run_experiment(resolve_config_json(quick_config(2)), tmp.path());
  const auto path = tmp.path() / "log.jsonl";
  const auto before = read_log(path.string());
  std::ofstream(path, std::ios::app) << R"({"schema":1,"type":"itera)";
  const auto after = read_log(path.string());
  EXPECT_EQ(after.iterations.size(), before.iterations.size());
}

std::vector<json> stripped(const fs::path& log_path) {
  const RunLog log = read_log(log_path.string());
  std::vector<json> out{log.header};
  for (const auto& r : log.iterations) out.push_back(strip_wall_time(r));
  for (const auto& r : log.evals) out.push_back(r);
  return out;
}

TEST(Determinism, SameSeedSameLog) {
  TempDir a, b;
  const json cfg = resolve_config_json(quick_config(4), {"algo.workers=1"});
  run_experiment(cfg, a.path());
  run_experiment(resolve_config_json(quick_config(4), {"algo.workers=3"}), b.path());
  auto la = stripped(a.path() / "log.jsonl");
  auto lb = stripped(b.path() / "log.jsonl");
  la.erase(la.begin());
  lb.erase(lb.begin());
  EXPECT_EQ(la, lb);
  TempDir c;
  run_experiment(resolve_config_json(quick_config(4), {"seed=2"}), c.path());
  auto lc = stripped(c.path() / "log.jsonl");
  lc.erase(lc.begin());
  EXPECT_NE(la, lc);
}

TEST(Resume, MatchesAnUninterruptedRun) {
  TempDir full, part;
  const json cfg = resolve_config_json(quick_config(6), {"checkpoint.every=2"});
  run_experiment(cfg, full.path());
  const auto first = run_experiment(cfg, part.path(), 3);
  EXPECT_FALSE(first.finished);
  const auto second = resume_experiment(part.path());
  EXPECT_TRUE(second.finished);
  EXPECT_EQ(stripped(full.path() / "log.jsonl"), stripped(part.path() / "log.jsonl"));
  EXPECT_EQ(read_file(full.path() / "results.csv"), read_file(part.path() / "results.csv"));
}

TEST(Resume, WithoutCheckpointStartsOver) {
  TempDir tmp;
  const json cfg = resolve_config_json(quick_config(3));
  run_experiment(cfg, tmp.path(), 1);
  EXPECT_TRUE(resume_experiment(tmp.path()).finished);
  EXPECT_EQ(read_log((tmp.path() / "log.jsonl").string()).iterations.size(), 3u);
}

TEST(Sweep, EmptyGridIsRejected) {
  EXPECT_THROW(parse_grid(json{{"axes", json::object()}}), Error);
  EXPECT_THROW(parse_grid(json{{"axes", {{"algo.alpha", json::array()}}}}), Error);
  try {
    parse_grid(json::array());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config_parse);
  }
}

TEST(Sweep, ExpandsTheCartesianProduct) {
  const auto grid = parse_grid(json{{"axes", {{"algo.mode", {"ppo", "d2lols"}}, {"seed", {1, 2, 3}}}}});
  const auto cells = expand_grid(grid);
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(cells.front().overrides, (std::vector<std::string>{"algo.mode=\"ppo\"", "seed=1"}));
}

TEST(Sweep, FailedCellsAreReportedNotFatal) {
  TempDir tmp;
  const auto grid = parse_grid(json{{"axes", {{"guide.kind", {"epsilon_optimal", "none"}}}}, {"seeds", {1, 2}}});
  const auto result = sweep(quick_config(2), {}, grid, tmp.path(), 2);
  ASSERT_EQ(result.cells.size(), 2u);
  EXPECT_EQ(result.cells[0].status(), "ok");
  EXPECT_EQ(result.cells[0].finals.size(), 2u);
  EXPECT_EQ(result.cells[1].status(), "failed");
  const std::string summary = read_file(tmp.path() / "summary.csv");
  EXPECT_NE(summary.find(",failed,"), std::string::npos);
}

TEST(Compare, TablesRunsAndRejectsMixedTasks) {
  TempDir tmp;
  run_experiment(resolve_config_json(quick_config(2)), tmp.path() / "a");
  run_experiment(resolve_config_json(quick_config(2), {"algo.mode=ppo"}), tmp.path() / "b");
  const auto table = compare({tmp.path()}, "final_return", true, tmp.path() / "cmp");
  EXPECT_EQ(table.rows.size(), 2u);
  EXPECT_TRUE(fs::exists(tmp.path() / "cmp" / "compare.csv"));
  EXPECT_TRUE(fs::exists(tmp.path() / "cmp" / "curves.svg"));
  run_experiment(resolve_config_json(quick_config(2), {"task.preset=\"concept_coverage.tiny\""}), tmp.path() / "c");
  try {
    compare({tmp.path()}, "final_return", false, tmp.path() / "cmp2");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::mismatched_task);
  }
}

int run_cli(const std::string& args, const fs::path& cwd) {
  const char* cli = std::getenv("L2S_CLI");
  const std::string cmd = "cd " + cwd.string() + " && " + cli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  if (!std::getenv("L2S_CLI")) GTEST_SKIP() << "L2S_CLI not set";
  TempDir tmp;
  EXPECT_EQ(run_cli("train --set algo.iterations=1 --set output_dir=\\\"r\\\"", tmp.path()), 0);
  EXPECT_TRUE(fs::exists(tmp.path() / "r" / "log.jsonl"));
  EXPECT_EQ(run_cli("train --set algo.mode=sarsa", tmp.path()), 2);
  std::ofstream(tmp.path() / "bad.json") << "{ not json";
  EXPECT_EQ(run_cli("train --config bad.json", tmp.path()), 2);
  EXPECT_EQ(run_cli("train --config missing.json", tmp.path()), 3);
  EXPECT_EQ(run_cli("train --set algo.iterations=1 --set guide.kind=none --set algo.mode=ppo_plus", tmp.path()), 4);
  EXPECT_EQ(run_cli("frobnicate", tmp.path()), 64);
  EXPECT_EQ(run_cli("resume --run r", tmp.path()), 0);
  EXPECT_EQ(run_cli("evaluate --checkpoint r/checkpoints/final.policy -n 8", tmp.path()), 0);
  EXPECT_EQ(run_cli("oracle --task needle_suffix.tiny --out dp.txt", tmp.path()), 0);
  EXPECT_EQ(run_cli("compare --runs r --out cmp", tmp.path()), 0);
}

TEST(Cli, OutputRootFromEnvironment) {
  if (!std::getenv("L2S_CLI")) GTEST_SKIP() << "L2S_CLI not set";
  TempDir cwd, root;
  const std::string env = "L2S_OUTPUT_ROOT=" + root.path().string() + " ";
  const std::string cmd = "cd " + cwd.path().string() + " && " + env + std::getenv("L2S_CLI") +
                          " train --set algo.iterations=1 --set output_dir=\\\"envrun\\\" >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(root.path() / "envrun" / "log.jsonl"));
  EXPECT_FALSE(fs::exists(cwd.path() / "envrun"));
}

}  // namespace
}  // namespace l2s::harness
