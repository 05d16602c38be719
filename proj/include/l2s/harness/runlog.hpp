// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "l2s/algorithms.hpp"
#include "l2s/error.hpp"
#include "l2s/version.hpp"

namespace l2s::harness {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Periodic evaluation of the learner.
struct EvalRecord {
  /// Completed training iterations at evaluation time.
  int iteration = 0;
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t episodes = 0;
  std::optional<double> exact_value;
  std::vector<std::string> bucket_labels;
  std::vector<double> bucket_means;
  std::optional<double> gap;
};

inline json header_record(const json& resolved_config) {
  return {{"schema", kSchemaVersion}, {"type", "header"}, {"version", kVersion}, {"config", resolved_config}};
}

inline json to_json(const IterationStats& s) {
  json j = {{"schema", kSchemaVersion},
            {"type", "iteration"},
            {"iteration", s.iteration},
            {"phase", s.phase},
            {"mean_return", s.mean_return},
            {"shaped_return", s.shaped_return},
            {"rollin_return", s.rollin_return},
            {"kl", s.kl},
            {"beta_kl", s.beta_kl},
            {"policy_loss", s.policy_loss},
            {"value_loss", s.value_loss},
            {"clip_fraction", s.clip_fraction},
            {"entropy", s.entropy},
            {"initial_ratio_deviation", s.initial_ratio_deviation},
            {"entries", s.entries},
            {"eps_class", s.eps_class ? json(*s.eps_class) : json(nullptr)},
            {"eps_class_se", s.eps_class_se ? json(*s.eps_class_se) : json(nullptr)},
            {"eps_class_upper_bound", s.eps_class_upper_bound},
            {"wall_time", s.wall_time}};
  return j;
}

inline json to_json(const EvalRecord& e) {
  return {{"schema", kSchemaVersion},
          {"type", "eval"},
          {"iteration", e.iteration},
          {"mean", e.mean},
          {"se", e.standard_error},
          {"episodes", e.episodes},
          {"exact_value", e.exact_value ? json(*e.exact_value) : json(nullptr)},
          {"bucket_labels", e.bucket_labels},
          {"bucket_means", e.bucket_means},
          {"gap", e.gap ? json(*e.gap) : json(nullptr)}};
}

/// Parses one log line and checks its schema version.
inline json parse_record(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::io, "malformed log record");
  if (!j.contains("schema") || !j["schema"].is_number_integer()) {
    throw Error(ErrorKind::schema_version, "log record without schema version");
  }
  if (j["schema"].get<int>() != kSchemaVersion) {
    throw Error(ErrorKind::schema_version, "unsupported log schema version " + j["schema"].dump());
  }
  return j;
}

struct RunLog {
  json header;
  std::vector<json> iterations;
  std::vector<json> evals;

  const json& config() const { return header.at("config"); }
};

/// Reads a log. A trailing partial line (interrupted write) is ignored.
inline RunLog read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  RunLog log;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (in.eof()) {
      const json probe = json::parse(line, nullptr, false);
      if (probe.is_discarded()) break;
    }
    json j = parse_record(line);
    const std::string type = j.value("type", "");
    if (type == "header") {
      log.header = std::move(j);
      have_header = true;
    } else if (type == "iteration") {
      log.iterations.push_back(std::move(j));
    } else if (type == "eval") {
      log.evals.push_back(std::move(j));
    } else {
      throw Error(ErrorKind::io, "unknown record type '" + type + "'");
    }
  }
  if (!have_header) throw Error(ErrorKind::io, path + " has no header record");
  return log;
}

/// The record with the run-dependent wall time removed, for comparisons.
inline json strip_wall_time(json record) {
  record.erase("wall_time");
  return record;
}

/// Append-only JSONL writer; every record is flushed.
class LogWriter {
 public:
  LogWriter(const std::string& path, bool append) : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw Error(ErrorKind::io, "cannot write " + path);
  }
  void write(const json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorKind::io, "log write failed");
  }

 private:
  std::ofstream out_;
};

}  // namespace l2s::harness
