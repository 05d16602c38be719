// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <string>

#include "l2s/error.hpp"
#include "l2s/features.hpp"
#include "l2s/mdp.hpp"
#include "l2s/policy.hpp"
#include "l2s/state_space.hpp"

namespace l2s {

// Policy checkpoints are plain text: a header describing the feature map,
// then one parameter per line at 17 significant digits, which round-trips
// doubles exactly.

inline void save_policy(std::ostream& out, const SoftmaxPolicy& policy) {
  const FeatureConfig fc = policy.features().config();
  out << "l2s-policy v1\n";
  out << "features " << to_string(fc.kind) << ' ' << fc.context << ' ' << (fc.positional ? 1 : 0) << '\n';
  out << "vocab " << policy.vocab_size() << '\n';
  out << "horizon " << policy.features().horizon() << '\n';
  out << "dim " << policy.features().dim() << '\n';
  out << "params " << policy.num_params() << '\n';
  char buf[32];
  for (double x : policy.params()) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    out << buf << '\n';
  }
}

/// Rebuilds the policy for `task`; tabular checkpoints re-enumerate the
/// state space unless one is supplied.
inline SoftmaxPolicy load_policy(std::istream& in, const TaskSpec& task,
                                 std::shared_ptr<const StateSpace> space = nullptr) {
  std::string magic, version, key, kind;
  int context = 0, positional = 0, vocab = 0, horizon = 0;
  std::size_t dim = 0, n = 0;
  if (!(in >> magic >> version) || magic != "l2s-policy") throw Error(ErrorKind::io, "not a policy checkpoint");
  if (version != "v1") throw Error(ErrorKind::schema_version, "unsupported checkpoint version " + version);
  if (!(in >> key >> kind >> context >> positional) || key != "features") throw Error(ErrorKind::io, "corrupt checkpoint header");
  if (!(in >> key >> vocab) || key != "vocab") throw Error(ErrorKind::io, "corrupt checkpoint header");
  if (!(in >> key >> horizon) || key != "horizon") throw Error(ErrorKind::io, "corrupt checkpoint header");
  if (!(in >> key >> dim) || key != "dim") throw Error(ErrorKind::io, "corrupt checkpoint header");
  if (!(in >> key >> n) || key != "params") throw Error(ErrorKind::io, "corrupt checkpoint header");
  if (vocab != task.vocab_size || horizon != task.horizon) {
    throw Error(ErrorKind::mismatched_task, "checkpoint was trained on a different task shape");
  }
  FeatureConfig fc;
  if (kind == "tabular") {
    fc.kind = FeatureConfig::Kind::tabular;
  } else if (kind == "window") {
    fc.kind = FeatureConfig::Kind::window;
  } else {
    throw Error(ErrorKind::io, "unknown feature kind " + kind);
  }
  fc.context = context;
  fc.positional = positional != 0;
  SoftmaxPolicy policy(make_features(fc, task, std::move(space)), vocab);
  if (policy.features().dim() != dim || policy.num_params() != n) {
    throw Error(ErrorKind::mismatched_task, "checkpoint dimensions do not match the task");
  }
  for (double& x : policy.params()) {
    std::string tok;
    if (!(in >> tok)) throw Error(ErrorKind::io, "truncated checkpoint");
    char* end = nullptr;
    x = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str()) throw Error(ErrorKind::io, "bad number in checkpoint: " + tok);
  }
  return policy;
}

inline void save_policy_file(const std::string& path, const SoftmaxPolicy& policy) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  save_policy(out, policy);
  if (!out) throw Error(ErrorKind::io, "write failed: " + path);
}

inline SoftmaxPolicy load_policy_file(const std::string& path, const TaskSpec& task,
                                      std::shared_ptr<const StateSpace> space = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  return load_policy(in, task, std::move(space));
}

}  // namespace l2s
