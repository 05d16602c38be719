// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "l2s/error.hpp"
#include "l2s/mdp.hpp"
#include "l2s/state_space.hpp"

namespace l2s {

struct SparseFeature {
  std::size_t index;
  double value;
};
using FeatureVector = std::vector<SparseFeature>;

struct FeatureConfig {
  enum class Kind { tabular, window };
  Kind kind = Kind::window;
  int context = 2;
  bool positional = true;

  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

/// State featurizer shared by policies and value functions.
class FeatureMap {
 public:
  virtual ~FeatureMap() = default;
  virtual std::size_t dim() const = 0;
  virtual FeatureConfig config() const = 0;
  virtual int vocab_size() const = 0;
  virtual int horizon() const = 0;
  virtual void features(const State& s, FeatureVector& out) const = 0;

  FeatureVector features(const State& s) const {
    FeatureVector out;
    features(s, out);
    return out;
  }
};

/// One indicator per enumerated state.
class TabularFeatures final : public FeatureMap {
 public:
  explicit TabularFeatures(std::shared_ptr<const StateSpace> space) : space_(std::move(space)) {}
  using FeatureMap::features;

  std::size_t dim() const override { return space_->size(); }
  FeatureConfig config() const override { return {FeatureConfig::Kind::tabular, 0, false}; }
  int vocab_size() const override { return space_->vocab_size(); }
  int horizon() const override { return space_->horizon(); }
  void features(const State& s, FeatureVector& out) const override {
    out.clear();
    out.push_back({space_->index(s), 1.0});
  }
  const StateSpace& space() const { return *space_; }
  std::shared_ptr<const StateSpace> space_ptr() const { return space_; }

 private:
  std::shared_ptr<const StateSpace> space_;
};

/// One-hots of the last `context` tokens of prompt ++ generated (with a
/// "none" slot), a normalized bag of prompt tokens, an optional position
/// one-hot, and a bias.
class WindowFeatures final : public FeatureMap {
 public:
  WindowFeatures(int vocab_size, int horizon, int context, bool positional)
      : vocab_(vocab_size), horizon_(horizon), context_(context), positional_(positional) {
    if (context < 0) throw Error(ErrorKind::invalid_argument, "context window must be >= 0");
  }
  using FeatureMap::features;

  std::size_t dim() const override {
    return slot_width() * static_cast<std::size_t>(context_) + static_cast<std::size_t>(vocab_) +
           (positional_ ? static_cast<std::size_t>(horizon_) : 0) + 1;
  }
  FeatureConfig config() const override { return {FeatureConfig::Kind::window, context_, positional_}; }
  int vocab_size() const override { return vocab_; }
  int horizon() const override { return horizon_; }

  /// Offset of the one-hot block for the j-th most recent token (j >= 1).
  std::size_t slot_offset(int j) const { return slot_width() * static_cast<std::size_t>(j - 1); }

  void features(const State& s, FeatureVector& out) const override {
    out.clear();
    const std::size_t gen = s.generated.size();
    const std::size_t total = s.prompt.size() + gen;
    for (int j = 1; j <= context_; ++j) {
      std::size_t slot = static_cast<std::size_t>(vocab_);  // none
      if (static_cast<std::size_t>(j) <= total) {
        const std::size_t pos = total - static_cast<std::size_t>(j);
        const Token t = pos >= s.prompt.size() ? s.generated[pos - s.prompt.size()] : s.prompt[pos];
        slot = static_cast<std::size_t>(t);
      }
      out.push_back({slot_offset(j) + slot, 1.0});
    }
    const std::size_t bag = slot_width() * static_cast<std::size_t>(context_);
    if (!s.prompt.empty()) {
      const double w = 1.0 / static_cast<double>(s.prompt.size());
      for (Token t : s.prompt) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const SparseFeature& f) { return f.index == bag + static_cast<std::size_t>(t); });
        if (it != out.end()) {
          it->value += w;
        } else {
          out.push_back({bag + static_cast<std::size_t>(t), w});
        }
      }
    }
    std::size_t next = bag + static_cast<std::size_t>(vocab_);
    if (positional_) {
      if (gen < static_cast<std::size_t>(horizon_)) out.push_back({next + gen, 1.0});
      next += static_cast<std::size_t>(horizon_);
    }
    out.push_back({next, 1.0});
  }

 private:
  std::size_t slot_width() const { return static_cast<std::size_t>(vocab_) + 1; }

  int vocab_;
  int horizon_;
  int context_;
  bool positional_;
};

inline std::shared_ptr<const FeatureMap> make_features(const FeatureConfig& config, const TaskSpec& task,
                                                       std::shared_ptr<const StateSpace> space = nullptr) {
  if (config.kind == FeatureConfig::Kind::tabular) {
    if (!space) space = std::make_shared<const StateSpace>(task);
    return std::make_shared<const TabularFeatures>(std::move(space));
  }
  return std::make_shared<const WindowFeatures>(task.vocab_size, task.horizon, config.context, config.positional);
}

inline const char* to_string(FeatureConfig::Kind kind) {
  return kind == FeatureConfig::Kind::tabular ? "tabular" : "window";
}

}  // namespace l2s
