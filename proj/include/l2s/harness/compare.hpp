// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "l2s/error.hpp"
#include "l2s/harness/experiment.hpp"
#include "l2s/harness/runlog.hpp"
#include "l2s/harness/sweep.hpp"

namespace l2s::harness {

struct RunSummary {
  std::string directory;
  std::string label;
  std::string preset;
  json task_params;
  std::uint64_t seed = 0;
  double metric = 0.0;
  /// (completed iterations, MC mean) per evaluation.
  std::vector<std::pair<int, double>> curve;
  std::vector<std::string> bucket_labels;
  std::vector<double> bucket_means;
};

/// Metrics: final_return, best_return, mean_eval_return, exact_value, gap,
/// or any numeric iteration field (value at the last iteration).
inline double run_metric(const RunLog& log, const std::string& metric) {
  auto need_evals = [&]() {
    if (log.evals.empty()) throw Error(ErrorKind::invalid_argument, "run has no evaluation records");
  };
  if (metric == "final_return") {
    need_evals();
    return log.evals.back().at("mean").get<double>();
  }
  if (metric == "best_return" || metric == "mean_eval_return") {
    need_evals();
    double best = -std::numeric_limits<double>::infinity(), total = 0.0;
    for (const auto& e : log.evals) {
      best = std::max(best, e.at("mean").get<double>());
      total += e.at("mean").get<double>();
    }
    return metric == "best_return" ? best : total / static_cast<double>(log.evals.size());
  }
  if (metric == "exact_value" || metric == "gap") {
    need_evals();
    const auto& v = log.evals.back().at(metric);
    if (v.is_null()) throw Error(ErrorKind::invalid_argument, "run did not record " + metric);
    return v.get<double>();
  }
  if (log.iterations.empty() || !log.iterations.back().contains(metric) ||
      !log.iterations.back().at(metric).is_number()) {
    throw Error(ErrorKind::invalid_argument, "unknown metric '" + metric + "'");
  }
  return log.iterations.back().at(metric).get<double>();
}

inline RunSummary summarize_run(const std::filesystem::path& dir, const std::string& metric) {
  const RunLog log = read_log((dir / "log.jsonl").string());
  RunSummary s;
  s.directory = dir.string();
  const json& cfg = log.config();
  s.label = cfg.at("name").get<std::string>();
  if (s.label.empty()) s.label = cfg.at("algo").at("mode").get<std::string>();
  s.preset = cfg.at("task").at("preset").get<std::string>();
  s.task_params = cfg.at("task").at("params");
  s.seed = cfg.at("seed").get<std::uint64_t>();
  s.metric = run_metric(log, metric);
  for (const auto& e : log.evals) s.curve.emplace_back(e.at("iteration").get<int>(), e.at("mean").get<double>());
  if (!log.evals.empty()) {
    s.bucket_labels = log.evals.back().at("bucket_labels").get<std::vector<std::string>>();
    s.bucket_means = log.evals.back().at("bucket_means").get<std::vector<double>>();
  }
  return s;
}

/// Run directories at or below each path (any directory holding log.jsonl).
inline std::vector<std::filesystem::path> find_runs(const std::vector<std::filesystem::path>& roots) {
  std::vector<std::filesystem::path> out;
  for (const auto& root : roots) {
    if (!std::filesystem::exists(root)) throw Error(ErrorKind::io, "no such run directory: " + root.string());
    if (std::filesystem::exists(root / "log.jsonl")) {
      out.push_back(root);
      continue;
    }
    std::vector<std::filesystem::path> found;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
      if (entry.is_regular_file() && entry.path().filename() == "log.jsonl") found.push_back(entry.path().parent_path());
    }
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

struct CompareRow {
  std::string label;
  std::size_t runs = 0;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> bucket_mean;
  std::vector<double> bucket_std;
  /// Seed-averaged evaluation curve.
  std::vector<std::pair<int, double>> curve;
};

struct CompareTable {
  std::string metric;
  std::string preset;
  std::vector<std::string> bucket_labels;
  std::vector<CompareRow> rows;
};

/// Groups runs by label; rows are ordered by mean metric, best first.
inline CompareTable compare_runs(const std::vector<RunSummary>& runs, const std::string& metric, bool buckets) {
  if (runs.empty()) throw Error(ErrorKind::invalid_argument, "no runs to compare");
  CompareTable table;
  table.metric = metric;
  table.preset = runs.front().preset;
  for (const auto& r : runs) {
    if (r.preset != table.preset || r.task_params != runs.front().task_params) {
      throw Error(ErrorKind::mismatched_task, "runs use different tasks: " + table.preset + " vs " + r.preset);
    }
  }
  if (buckets) table.bucket_labels = runs.front().bucket_labels;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunSummary*>> groups;
  for (const auto& r : runs) {
    if (!groups.count(r.label)) order.push_back(r.label);
    groups[r.label].push_back(&r);
  }
  for (const auto& label : order) {
    const auto& members = groups[label];
    CompareRow row;
    row.label = label;
    row.runs = members.size();
    std::vector<double> xs;
    for (const auto* m : members) xs.push_back(m->metric);
    mean_std(xs, row.mean, row.std);
    for (std::size_t b = 0; b < table.bucket_labels.size(); ++b) {
      std::vector<double> vs;
      for (const auto* m : members) {
        if (m->bucket_labels != table.bucket_labels) {
          throw Error(ErrorKind::invalid_argument, "runs disagree on bucket layout");
        }
        vs.push_back(m->bucket_means[b]);
      }
      double mu, sd;
      mean_std(vs, mu, sd);
      row.bucket_mean.push_back(mu);
      row.bucket_std.push_back(sd);
    }
    std::map<int, std::pair<double, int>> acc;
    for (const auto* m : members) {
      for (const auto& [it, v] : m->curve) {
        acc[it].first += v;
        acc[it].second += 1;
      }
    }
    for (const auto& [it, sum] : acc) row.curve.emplace_back(it, sum.first / sum.second);
    table.rows.push_back(std::move(row));
  }
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const CompareRow& a, const CompareRow& b) { return a.mean > b.mean; });
  return table;
}

inline std::string compare_csv(const CompareTable& t) {
  std::ostringstream out;
  out << "label,runs," << t.metric << "_mean," << t.metric << "_std";
  for (const auto& b : t.bucket_labels) out << ',' << b << "_mean," << b << "_std";
  out << '\n';
  char buf[64];
  for (const auto& r : t.rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.mean, r.std);
    out << r.label << ',' << r.runs << ',' << buf;
    for (std::size_t b = 0; b < r.bucket_mean.size(); ++b) {
      std::snprintf(buf, sizeof buf, ",%.6f,%.6f", r.bucket_mean[b], r.bucket_std[b]);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

inline std::string compare_text(const CompareTable& t) {
  std::ostringstream out;
  std::size_t width = 9;
  for (const auto& r : t.rows) width = std::max(width, r.label.size() + 2);
  char buf[64];
  out << "task " << t.preset << ", metric " << t.metric << "\n";
  out << std::string("algorithm") + std::string(width - 9, ' ') << " runs  " << "mean +- std";
  for (const auto& b : t.bucket_labels) out << "  " << b;
  out << '\n';
  for (const auto& r : t.rows) {
    out << r.label << std::string(width - r.label.size(), ' ');
    std::snprintf(buf, sizeof buf, " %4zu  %.4f +- %.4f", r.runs, r.mean, r.std);
    out << buf;
    for (std::size_t b = 0; b < r.bucket_mean.size(); ++b) {
      std::snprintf(buf, sizeof buf, "  %.4f +- %.4f", r.bucket_mean[b], r.bucket_std[b]);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return colors[i % 8];
}

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace detail

/// Seed-averaged evaluation return against iteration, one line per row.
inline std::string curves_svg(const CompareTable& t) {
  const double W = 640, H = 400, L = 60, R = 160, T = 30, B = 50;
  double xmax = 1, ymin = 0, ymax = 0;
  bool any = false;
  for (const auto& r : t.rows) {
    for (const auto& [x, y] : r.curve) {
      xmax = std::max(xmax, static_cast<double>(x));
      ymin = any ? std::min(ymin, y) : y;
      ymax = any ? std::max(ymax, y) : y;
      any = true;
    }
  }
  if (!any || ymax - ymin < 1e-9) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  auto px = [&](double x) { return L + (W - L - R) * x / xmax; };
  auto py = [&](double y) { return H - B - (H - T - B) * (y - ymin) / (ymax - ymin); };
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n", W, H);
  out << buf;
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L, H - B, W - R, H - B);
  out << buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L, T, L, H - B);
  out << buf;
  for (int k = 0; k <= 4; ++k) {
    const double y = ymin + (ymax - ymin) * k / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">%.3g</text>\n", L - 4, py(y) + 4, y);
    out << buf;
    const double x = xmax * k / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"middle\">%.0f</text>\n", px(x), H - B + 16, x);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\">iteration</text>\n", (L + W - R) / 2, H - 10);
  out << buf;
  out << "<text x=\"14\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << (T + H - B) / 2
      << ")\" text-anchor=\"middle\">" << detail::svg_escape(t.metric) << "</text>\n";
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    out << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << detail::palette(i) << "\" points=\"";
    for (const auto& [x, y] : r.curve) {
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(x), py(y));
      out << buf;
    }
    out << "\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" fill=\"%s\">", W - R + 10, T + 16.0 * (i + 1), detail::palette(i));
    out << buf << detail::svg_escape(r.label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

/// Grouped bars of per-bucket means (one group per bucket).
inline std::string buckets_svg(const CompareTable& t) {
  const double W = 640, H = 400, L = 60, R = 160, T = 30, B = 50;
  double ymin = 0, ymax = 0;
  for (const auto& r : t.rows) {
    for (double m : r.bucket_mean) {
      ymin = std::min(ymin, m);
      ymax = std::max(ymax, m);
    }
  }
  if (ymax - ymin < 1e-9) ymax = ymin + 1;
  auto py = [&](double y) { return H - B - (H - T - B) * (y - ymin) / (ymax - ymin); };
  const std::size_t nb = t.bucket_labels.size(), nr = t.rows.size();
  const double group = (W - L - R) / std::max<std::size_t>(1, nb);
  const double bar = group * 0.8 / std::max<std::size_t>(1, nr);
  std::ostringstream out;
  char buf[200];
  std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n", W, H);
  out << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L, py(0), W - R, py(0));
  out << buf;
  for (std::size_t b = 0; b < nb; ++b) {
    const double gx = L + group * b + group * 0.1;
    for (std::size_t i = 0; i < nr; ++i) {
      const double v = t.rows[i].bucket_mean[b];
      const double y0 = py(std::max(0.0, v)), y1 = py(std::min(0.0, v));
      std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\"/>\n", gx + bar * i, y0, bar * 0.9, y1 - y0, detail::palette(i));
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\">", L + group * (b + 0.5), H - B + 18);
    out << buf << detail::svg_escape(t.bucket_labels[b]) << "</text>\n";
  }
  for (std::size_t i = 0; i < nr; ++i) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" fill=\"%s\">", W - R + 10, T + 16.0 * (i + 1), detail::palette(i));
    out << buf << detail::svg_escape(t.rows[i].label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

/// Writes compare.csv, compare.txt, curves.svg and (with buckets)
/// buckets.svg into `out_dir`.
inline CompareTable compare(const std::vector<std::filesystem::path>& roots, const std::string& metric, bool buckets,
                            const std::filesystem::path& out_dir) {
  std::vector<RunSummary> runs;
  for (const auto& dir : find_runs(roots)) runs.push_back(summarize_run(dir, metric));
  const auto table = compare_runs(runs, metric, buckets);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  detail::write_text(out_dir / "compare.csv", compare_csv(table));
  detail::write_text(out_dir / "compare.txt", compare_text(table));
  detail::write_text(out_dir / "curves.svg", curves_svg(table));
  if (buckets && !table.bucket_labels.empty()) detail::write_text(out_dir / "buckets.svg", buckets_svg(table));
  return table;
}

}  // namespace l2s::harness
