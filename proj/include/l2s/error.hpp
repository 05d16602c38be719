// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace l2s {

enum class ErrorKind {
  horizon_exceeded,
  empty_dataset,
  invalid_token,
  unreachable_state,
  non_differentiable_policy,
  support_mismatch,
  reference_unscorable,
  length_mismatch,
  terminal_start,
  budget_exceeded,
  invalid_argument,
  missing_guide,
  invalid_mode,
  non_finite_loss,
  config_parse,
  io,
  schema_version,
  mismatched_task,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::horizon_exceeded: return "horizon-exceeded";
    case ErrorKind::empty_dataset: return "empty-dataset";
    case ErrorKind::invalid_token: return "invalid-token";
    case ErrorKind::unreachable_state: return "unreachable-state";
    case ErrorKind::non_differentiable_policy: return "non-differentiable-policy";
    case ErrorKind::support_mismatch: return "support-mismatch";
    case ErrorKind::reference_unscorable: return "reference-unscorable";
    case ErrorKind::length_mismatch: return "length-mismatch";
    case ErrorKind::terminal_start: return "terminal-start";
    case ErrorKind::budget_exceeded: return "budget-exceeded";
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::missing_guide: return "missing-guide";
    case ErrorKind::invalid_mode: return "invalid-mode";
    case ErrorKind::non_finite_loss: return "non-finite-loss";
    case ErrorKind::config_parse: return "config-parse";
    case ErrorKind::io: return "io";
    case ErrorKind::schema_version: return "schema-version";
    case ErrorKind::mismatched_task: return "mismatched-task";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace l2s
