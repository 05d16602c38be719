// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "l2s/error.hpp"
#include "l2s/harness/config.hpp"
#include "l2s/harness/experiment.hpp"

namespace l2s::harness {

/// Cartesian grid of config overrides, crossed with seeds.
struct SweepGrid {
  std::vector<std::pair<std::string, std::vector<json>>> axes;
  std::vector<std::uint64_t> seeds;
};

/// Grid file: {"axes": {"algo.beta": [0.2, 0.5]}, "seeds": [1, 2, 3]}.
inline SweepGrid parse_grid(const json& j) {
  if (!j.is_object() || !j.contains("axes") || !j["axes"].is_object()) {
    throw Error(ErrorKind::config_parse, "grid needs an 'axes' object");
  }
  SweepGrid grid;
  for (auto it = j["axes"].begin(); it != j["axes"].end(); ++it) {
    if (!it.value().is_array()) throw Error(ErrorKind::config_parse, "grid axis '" + it.key() + "' must be a list");
    grid.axes.emplace_back(it.key(), it.value().get<std::vector<json>>());
  }
  if (j.contains("seeds")) {
    try {
      grid.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::config_parse, std::string("bad seeds: ") + e.what());
    }
  }
  if (grid.axes.empty()) throw Error(ErrorKind::invalid_argument, "empty grid: no axes");
  for (const auto& [key, values] : grid.axes) {
    if (values.empty()) throw Error(ErrorKind::invalid_argument, "empty grid: axis '" + key + "' has no values");
  }
  return grid;
}

struct SweepCell {
  std::string name;
  std::vector<std::string> overrides;
  std::vector<json> values;
};

inline std::string value_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

inline std::vector<SweepCell> expand_grid(const SweepGrid& grid) {
  std::vector<SweepCell> cells{SweepCell{}};
  for (const auto& [key, values] : grid.axes) {
    std::vector<SweepCell> next;
    for (const auto& cell : cells) {
      for (const auto& v : values) {
        SweepCell c = cell;
        c.overrides.push_back(key + "=" + v.dump());
        c.values.push_back(v);
        c.name += (c.name.empty() ? "" : "__") + key + "=" + value_text(v);
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

struct CellSummary {
  SweepCell cell;
  std::vector<std::uint64_t> seeds_ok;
  std::vector<double> finals;
  std::vector<std::string> errors;
  double mean = 0.0;
  double std = 0.0;

  std::string status() const {
    if (errors.empty()) return "ok";
    return finals.empty() ? "failed" : "partial";
  }
};

struct SweepResult {
  std::filesystem::path directory;
  std::vector<CellSummary> cells;
};

inline void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    for (double x : xs) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(xs.size() - 1));
  }
}

inline std::string sweep_summary_csv(const SweepGrid& grid, const std::vector<CellSummary>& cells) {
  std::ostringstream out;
  out << "cell";
  for (const auto& axis : grid.axes) out << ',' << axis.first;
  out << ",seeds_ok,seeds_failed,mean,std,status,error\n";
  for (const auto& c : cells) {
    out << c.cell.name;
    for (const auto& v : c.cell.values) out << ',' << value_text(v);
    char buf[64];
    out << ',' << c.seeds_ok.size() << ',' << c.errors.size() << ',';
    if (!c.finals.empty()) {
      std::snprintf(buf, sizeof buf, "%.6f,%.6f", c.mean, c.std);
      out << buf;
    } else {
      out << ',';
    }
    std::string err = c.errors.empty() ? "" : c.errors.front();
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << ',' << c.status() << ',' << err << '\n';
  }
  return out.str();
}

/// Runs every cell x seed under `directory`, `jobs` at a time. A failing run
/// is recorded against its cell and does not stop the others.
inline SweepResult sweep(const json& base_user, const std::vector<std::string>& base_overrides, const SweepGrid& grid,
                         const std::filesystem::path& directory, int jobs = 1) {
  const auto cells = expand_grid(grid);
  std::vector<std::uint64_t> seeds = grid.seeds;
  if (seeds.empty()) seeds.push_back(resolve_config(base_user, base_overrides).seed);
  struct Job {
    std::size_t cell;
    std::uint64_t seed;
  };
  std::vector<Job> work;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (auto s : seeds) work.push_back({c, s});
  }
  struct JobResult {
    std::optional<double> final_mean;
    std::string error;
  };
  std::vector<JobResult> results(work.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= work.size()) return;
      const auto& job = work[i];
      const auto dir = directory / cells[job.cell].name / ("seed_" + std::to_string(job.seed));
      try {
        auto overrides = base_overrides;
        for (const auto& o : cells[job.cell].overrides) overrides.push_back(o);
        overrides.push_back("seed=" + std::to_string(job.seed));
        overrides.push_back("output_dir=" + json(dir.string()).dump());
        overrides.push_back("name=" + json(cells[job.cell].name).dump());
        const json resolved = resolve_config_json(base_user, overrides);
        const auto outcome = run_experiment(resolved, dir);
        if (!outcome.evals.empty()) results[i].final_mean = outcome.evals.back().mean;
        else results[i].error = "no evaluation recorded";
      } catch (const std::exception& e) {
        results[i].error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(work.size())));
  for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  SweepResult out;
  out.directory = directory;
  for (const auto& c : cells) out.cells.push_back(CellSummary{c, {}, {}, {}, 0.0, 0.0});
  for (std::size_t i = 0; i < work.size(); ++i) {
    auto& cell = out.cells[work[i].cell];
    if (results[i].final_mean) {
      cell.seeds_ok.push_back(work[i].seed);
      cell.finals.push_back(*results[i].final_mean);
    } else {
      cell.errors.push_back("seed " + std::to_string(work[i].seed) + ": " + results[i].error);
    }
  }
  for (auto& c : out.cells) mean_std(c.finals, c.mean, c.std);
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  detail::write_text(directory / "summary.csv", sweep_summary_csv(grid, out.cells));
  return out;
}

}  // namespace l2s::harness
