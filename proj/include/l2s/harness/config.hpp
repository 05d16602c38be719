// Copyright 2026 The l2s-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "l2s/algorithms.hpp"
#include "l2s/error.hpp"
#include "l2s/features.hpp"
#include "l2s/mdp.hpp"
#include "l2s/policy.hpp"
#include "l2s/state_space.hpp"
#include "l2s/tasks.hpp"

namespace l2s::harness {

using nlohmann::json;

struct TaskConfig {
  std::string preset = "needle_suffix.tiny";
  json params = json::object();
};

struct GuideConfig {
  /// none, epsilon_optimal, heuristic, frozen_bc
  std::string kind = "epsilon_optimal";
  double epsilon = 0.1;
  /// frozen_bc teacher: auto, epsilon_optimal, heuristic
  std::string teacher = "auto";
  std::size_t demonstrations = 64;
  BcConfig bc{0.5, 200};
  /// Hide the guide's distribution (sampling only).
  bool black_box = false;
};

struct LearnerConfig {
  FeatureConfig features;
  /// zero or prior (context bigram of the task)
  std::string init = "zero";
};

struct EvalConfig {
  int every = 10;
  std::size_t episodes = 16;
  bool greedy = false;
  std::size_t buckets = 3;
  /// auto, guide, difficulty
  std::string bucket_by = "auto";
  std::size_t bucket_episodes = 32;
  /// Also record the exact value when the state space fits the oracle budget.
  bool exact = false;
};

struct CheckpointConfig {
  int every = 0;
};

struct RunConfig {
  std::string name;
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  TaskConfig task;
  GuideConfig guide;
  LearnerConfig learner;
  AlgoConfig algo;
  EvalConfig eval;
  CheckpointConfig checkpoint;
};

// ---------------------------------------------------------------------------
// Task presets.

inline json preset_params(const std::string& preset) {
  if (preset == "needle_suffix.tiny") {
    return {{"vocab_size", 4}, {"horizon", 6}, {"suffix", {1, 3, 2, 1}}, {"prompts", {{0}}}};
  }
  if (preset == "needle_suffix.small") {
    return {{"vocab_size", 4}, {"horizon", 8}, {"suffix", {1, 3, 2, 1, 3, 2}}, {"prompts", {{0}}}};
  }
  if (preset == "positive_continuation.tiny") {
    return {{"vocab_size", 6},        {"horizon", 4},         {"sentiment_weight", 0.7}, {"guide_steering", 1.5},
            {"data_seed", 7},         {"num_prompts", 3},     {"prompt_length", 1},      {"cross_weight", 0.02},
            {"lexicon", nullptr},     {"lexicon_file", ""},   {"bigram_file", ""},       {"prompts", nullptr}};
  }
  if (preset == "positive_continuation.small") {
    return {{"vocab_size", 32},       {"horizon", 16},        {"sentiment_weight", 0.7}, {"guide_steering", 1.5},
            {"data_seed", 7},         {"num_prompts", 24},    {"prompt_length", 3},      {"cross_weight", 0.02},
            {"lexicon", nullptr},     {"lexicon_file", ""},   {"bigram_file", ""},       {"prompts", nullptr}};
  }
  if (preset == "concept_coverage.tiny") {
    return {{"vocab_size", 6},        {"horizon", 5},           {"repetition_penalty", 0.0}, {"eos", nullptr},
            {"data_seed", 7},         {"num_prompts", 2},       {"concepts_per_prompt", 3},
            {"concepts", {{1, 2, 3}, {2, 4, 5}}}, {"concepts_file", ""}};
  }
  if (preset == "concept_coverage.small") {
    return {{"vocab_size", 32},       {"horizon", 16},          {"repetition_penalty", 0.0}, {"eos", nullptr},
            {"data_seed", 7},         {"num_prompts", 24},      {"concepts_per_prompt", 3},
            {"concepts", nullptr},    {"concepts_file", ""}};
  }
  throw Error(ErrorKind::config_parse, "unknown task preset '" + preset + "'");
}

inline std::vector<std::string> preset_names() {
  return {"needle_suffix.tiny",          "needle_suffix.small",    "positive_continuation.tiny",
          "positive_continuation.small", "concept_coverage.tiny", "concept_coverage.small"};
}

inline std::string preset_family(const std::string& preset) { return preset.substr(0, preset.find('.')); }

namespace detail {

template <class T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config_parse, std::string("bad value for '") + key + "': " + e.what());
  }
}

inline std::vector<std::vector<Token>> token_lists(const json& j, const char* key) {
  return get<std::vector<std::vector<Token>>>(j, key);
}

/// Evenly graded lexicon: first third negative, middle neutral, last third
/// positive.
inline std::vector<double> graded_lexicon(int vocab) {
  std::vector<double> lex(static_cast<std::size_t>(vocab), 0.0);
  const int third = vocab / 3;
  for (int i = 0; i < third; ++i) {
    const double frac = third > 1 ? static_cast<double>(i) / (third - 1) : 0.0;
    lex[static_cast<std::size_t>(i)] = -1.0 + 0.7 * frac;
    lex[static_cast<std::size_t>(vocab - 1 - i)] = 1.0 - 0.7 * frac;
  }
  return lex;
}

/// Prompts ranging from all-positive to all-negative context. Prompt k draws
/// each token negative with probability k / (n - 1); the hardest ones end in
/// a negative token.
inline PromptDataset graded_prompts(const std::vector<double>& lexicon, int n, int length, std::uint64_t seed) {
  std::vector<Token> neg, pos;
  for (std::size_t t = 0; t < lexicon.size(); ++t) {
    if (lexicon[t] < 0.0) neg.push_back(static_cast<Token>(t));
    if (lexicon[t] > 0.0) pos.push_back(static_cast<Token>(t));
  }
  if (neg.empty() || pos.empty()) throw Error(ErrorKind::config_parse, "lexicon needs both polarities");
  Rng rng(seed);
  PromptDataset data;
  for (int k = 0; k < n; ++k) {
    const double p_neg = n > 1 ? static_cast<double>(k) / (n - 1) : 0.5;
    std::vector<Token> prompt;
    for (int i = 0; i < length; ++i) {
      const bool negative = rng.uniform() < p_neg;
      const auto& pool = negative ? neg : pos;
      prompt.push_back(pool[rng.below(pool.size())]);
    }
    data.prompts.push_back(std::move(prompt));
  }
  return data;
}

inline PromptDataset dataset_from(const std::vector<std::vector<Token>>& prompts) {
  PromptDataset d;
  d.prompts = prompts;
  return d;
}

inline std::vector<std::vector<Token>> read_token_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  std::vector<std::vector<Token>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<Token> row;
    long t;
    while (ls >> t) row.push_back(static_cast<Token>(t));
    if (!ls.eof()) throw Error(ErrorKind::config_parse, "bad token line in " + path + ": " + line);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace detail

inline TaskSpec build_task(const TaskConfig& cfg) {
  const std::string family = preset_family(cfg.preset);
  const json& p = cfg.params;
  TaskSpec task;
  if (family == "needle_suffix") {
    NeedleSuffixParams np;
    np.vocab_size = detail::get<int>(p, "vocab_size");
    np.horizon = detail::get<int>(p, "horizon");
    np.suffix = detail::get<std::vector<Token>>(p, "suffix");
    np.dataset = detail::dataset_from(detail::token_lists(p, "prompts"));
    task = make_needle_suffix(np);
  } else if (family == "positive_continuation") {
    PositiveContinuationParams pp;
    pp.vocab_size = detail::get<int>(p, "vocab_size");
    pp.horizon = detail::get<int>(p, "horizon");
    pp.sentiment_weight = detail::get<double>(p, "sentiment_weight");
    pp.guide_steering = detail::get<double>(p, "guide_steering");
    const auto seed = detail::get<std::uint64_t>(p, "data_seed");
    const auto lex_file = detail::get<std::string>(p, "lexicon_file");
    if (!lex_file.empty()) {
      pp.lexicon = load_lexicon(lex_file);
    } else if (!p.at("lexicon").is_null()) {
      pp.lexicon = detail::get<std::vector<double>>(p, "lexicon");
    } else {
      pp.lexicon = detail::graded_lexicon(pp.vocab_size);
    }
    const auto bigram_file = detail::get<std::string>(p, "bigram_file");
    pp.bigram = bigram_file.empty() ? persistent_bigram(pp.lexicon, seed, detail::get<double>(p, "cross_weight"))
                                    : load_bigram(bigram_file);
    if (!p.at("prompts").is_null()) {
      pp.dataset = detail::dataset_from(detail::token_lists(p, "prompts"));
    } else {
      pp.dataset = detail::graded_prompts(pp.lexicon, detail::get<int>(p, "num_prompts"),
                                          detail::get<int>(p, "prompt_length"), seed ^ 0x9e3779b97f4a7c15ULL);
    }
    task = make_positive_continuation(pp);
  } else if (family == "concept_coverage") {
    ConceptCoverageParams cp;
    cp.vocab_size = detail::get<int>(p, "vocab_size");
    cp.horizon = detail::get<int>(p, "horizon");
    cp.repetition_penalty = detail::get<double>(p, "repetition_penalty");
    if (!p.at("eos").is_null()) cp.eos = detail::get<Token>(p, "eos");
    const auto file = detail::get<std::string>(p, "concepts_file");
    if (!file.empty()) {
      cp.dataset = detail::dataset_from(detail::read_token_lines(file));
    } else if (!p.at("concepts").is_null()) {
      cp.dataset = detail::dataset_from(detail::token_lists(p, "concepts"));
    } else {
      // Distinct concepts per prompt, drawn deterministically.
      Rng rng(detail::get<std::uint64_t>(p, "data_seed"));
      const int n = detail::get<int>(p, "num_prompts");
      const int k = detail::get<int>(p, "concepts_per_prompt");
      std::vector<Token> pool;
      for (Token t = 0; t < cp.vocab_size; ++t) {
        if (!(cp.eos && t == *cp.eos)) pool.push_back(t);
      }
      if (k > static_cast<int>(pool.size())) throw Error(ErrorKind::config_parse, "too many concepts per prompt");
      for (int i = 0; i < n; ++i) {
        auto avail = pool;
        std::vector<Token> prompt;
        for (int j = 0; j < k; ++j) {
          const std::size_t pick = rng.below(avail.size());
          prompt.push_back(avail[pick]);
          avail.erase(avail.begin() + static_cast<std::ptrdiff_t>(pick));
        }
        cp.dataset.prompts.push_back(std::move(prompt));
      }
    }
    task = make_concept_coverage(cp);
  } else {
    throw Error(ErrorKind::config_parse, "unknown task family '" + family + "'");
  }
  task.name = cfg.preset;
  return task;
}

/// The enumerated state space if it fits the oracle budget.
inline std::shared_ptr<const StateSpace> try_state_space(const TaskSpec& task,
                                                         std::size_t budget = StateSpace::default_budget) {
  if (StateSpace::required_nodes(task) > budget) return nullptr;
  return std::make_shared<const StateSpace>(task, budget);
}

inline SoftmaxPolicy build_learner(const LearnerConfig& cfg, const TaskSpec& task,
                                   std::shared_ptr<const StateSpace> space) {
  if (cfg.features.kind == FeatureConfig::Kind::tabular && !space) {
    throw Error(ErrorKind::budget_exceeded, "tabular features need an enumerable task");
  }
  SoftmaxPolicy policy(make_features(cfg.features, task, space), task.vocab_size);
  if (cfg.init == "zero") return policy;
  if (cfg.init != "prior") throw Error(ErrorKind::config_parse, "unknown learner init '" + cfg.init + "'");
  if (task.context_prior.empty()) return policy;
  const std::size_t v = static_cast<std::size_t>(task.vocab_size);
  auto& theta = policy.params();
  auto prior_row = [&](const State& s) -> const double* {
    const auto last = s.last_token();
    return last ? task.context_prior.data() + static_cast<std::size_t>(*last) * v : nullptr;
  };
  if (cfg.features.kind == FeatureConfig::Kind::window) {
    const auto& wf = static_cast<const WindowFeatures&>(policy.features());
    if (cfg.features.context < 1) return policy;
    for (std::size_t prev = 0; prev < v; ++prev) {
      for (std::size_t a = 0; a < v; ++a) {
        theta[(wf.slot_offset(1) + prev) * v + a] = task.context_prior[prev * v + a];
      }
    }
  } else {
    for (std::size_t i = 0; i < space->size(); ++i) {
      if (const double* row = prior_row(space->state(i))) {
        for (std::size_t a = 0; a < v; ++a) theta[i * v + a] = row[a];
      }
    }
  }
  return policy;
}

/// Guide policy for the run; `nullptr` when kind is "none".
inline PolicyPtr build_guide(const GuideConfig& cfg, const TaskSpec& task, std::shared_ptr<const StateSpace> space,
                             const LearnerConfig& learner_cfg, std::uint64_t seed) {
  auto eps_optimal = [&](double eps) -> PolicyPtr {
    if (!space) throw Error(ErrorKind::budget_exceeded, "epsilon-optimal guide needs an enumerable task");
    return make_epsilon_optimal_guide(dp_solve(task, space), eps);
  };
  PolicyPtr guide;
  if (cfg.kind == "none") {
    return nullptr;
  } else if (cfg.kind == "epsilon_optimal") {
    guide = eps_optimal(cfg.epsilon);
  } else if (cfg.kind == "heuristic") {
    guide = make_heuristic_guide(task, cfg.epsilon);
  } else if (cfg.kind == "frozen_bc") {
    std::string teacher_kind = cfg.teacher;
    if (teacher_kind == "auto") teacher_kind = space ? "epsilon_optimal" : "heuristic";
    PolicyPtr teacher;
    if (teacher_kind == "epsilon_optimal") {
      teacher = eps_optimal(cfg.epsilon);
    } else if (teacher_kind == "heuristic") {
      teacher = make_heuristic_guide(task, cfg.epsilon);
    } else {
      throw Error(ErrorKind::config_parse, "unknown frozen_bc teacher '" + teacher_kind + "'");
    }
    Rng rng = Rng::stream(seed, "guide");
    guide = make_frozen_bc_guide(*teacher, task, make_features(learner_cfg.features, task, space), cfg.demonstrations,
                                 cfg.bc, rng);
  } else {
    throw Error(ErrorKind::config_parse, "unknown guide kind '" + cfg.kind + "'");
  }
  return cfg.black_box ? BlackBoxPolicy::wrap(guide) : guide;
}

// ---------------------------------------------------------------------------
// JSON conversion. Every field is always written, so the resolved config is
// complete and parse(to_json(c)) reproduces c.

namespace detail {

inline const char* granularity_name(Granularity g) {
  return g == Granularity::per_trajectory ? "per_trajectory" : "per_step";
}

inline Granularity parse_granularity(const std::string& s) {
  if (s == "per_trajectory") return Granularity::per_trajectory;
  if (s == "per_step") return Granularity::per_step;
  throw Error(ErrorKind::config_parse, "unknown granularity '" + s + "'");
}

inline DeviationMode parse_deviation(const std::string& s) {
  for (auto m : {DeviationMode::rollout_policy, DeviationMode::uniform, DeviationMode::learner}) {
    if (s == to_string(m)) return m;
  }
  throw Error(ErrorKind::config_parse, "unknown deviation mode '" + s + "'");
}

inline FeatureConfig::Kind parse_feature_kind(const std::string& s) {
  if (s == "tabular") return FeatureConfig::Kind::tabular;
  if (s == "window") return FeatureConfig::Kind::window;
  throw Error(ErrorKind::config_parse, "unknown feature kind '" + s + "'");
}

inline json optional_json(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

inline std::optional<double> optional_double(const json& j, const char* key) {
  if (j.at(key).is_null()) return std::nullopt;
  return get<double>(j, key);
}

}  // namespace detail

inline json to_json(const AlgoConfig& a) {
  return {
      {"mode", to_string(a.mode)},
      {"iterations", a.iterations},
      {"beta", detail::optional_json(a.beta)},
      {"ppo_plus_beta", a.ppo_plus_beta},
      {"aggrevated_beta", a.aggrevated_beta},
      {"alpha", detail::optional_json(a.alpha)},
      {"granularity", detail::granularity_name(a.granularity)},
      {"ppo",
       {{"clip", a.ppo.clip},
        {"epochs", a.ppo.epochs},
        {"minibatch", a.ppo.minibatch},
        {"learning_rate", a.ppo.learning_rate},
        {"value_coeff", a.ppo.value_coeff},
        {"entropy_coeff", a.ppo.entropy_coeff},
        {"normalize_advantages", a.ppo.normalize_advantages},
        {"optimizer", a.ppo.optimizer}}},
      {"gae", {{"gamma", a.gae.gamma}, {"lambda", a.gae.lambda}}},
      {"kl",
       {{"beta_kl", a.kl.beta_kl}, {"target_kl", a.kl.target_kl}, {"adaptive", a.kl.adaptive}, {"horizon_n", a.kl.horizon_n}}},
      {"rollins_per_iteration", a.rollins_per_iteration},
      {"restarts_per_rollin", a.restarts_per_rollin},
      {"guide_mc_rollouts", a.guide_mc_rollouts},
      {"deviation", to_string(a.deviation)},
      {"guide_value", a.guide_value == GuideValueMode::fitted ? "fitted" : "monte_carlo"},
      {"importance_correction", a.importance_correction},
      {"guide_value_fit",
       {{"learning_rate", a.guide_value_fit.learning_rate},
        {"epochs", a.guide_value_fit.epochs},
        {"closed_form", a.guide_value_fit.closed_form}}},
      {"bc", {{"learning_rate", a.bc.learning_rate}, {"epochs", a.bc.epochs}}},
      {"bc_demonstrations", a.bc_demonstrations},
      {"eps_class_states", a.eps_class_states},
      {"eps_class_mc", a.eps_class_mc},
      {"workers", a.workers},
  };
}

inline AlgoConfig algo_from_json(const json& j) {
  using detail::get;
  AlgoConfig a;
  a.mode = parse_mode(get<std::string>(j, "mode"));
  a.iterations = get<int>(j, "iterations");
  a.beta = detail::optional_double(j, "beta");
  a.ppo_plus_beta = get<double>(j, "ppo_plus_beta");
  a.aggrevated_beta = get<double>(j, "aggrevated_beta");
  a.alpha = detail::optional_double(j, "alpha");
  a.granularity = detail::parse_granularity(get<std::string>(j, "granularity"));
  const json& p = j.at("ppo");
  a.ppo.clip = get<double>(p, "clip");
  a.ppo.epochs = get<int>(p, "epochs");
  a.ppo.minibatch = get<std::size_t>(p, "minibatch");
  a.ppo.learning_rate = get<double>(p, "learning_rate");
  a.ppo.value_coeff = get<double>(p, "value_coeff");
  a.ppo.entropy_coeff = get<double>(p, "entropy_coeff");
  a.ppo.normalize_advantages = get<bool>(p, "normalize_advantages");
  a.ppo.optimizer = get<std::string>(p, "optimizer");
  if (a.ppo.optimizer != "adam" && a.ppo.optimizer != "sgd") {
    throw Error(ErrorKind::config_parse, "unknown optimizer '" + a.ppo.optimizer + "'");
  }
  a.gae.gamma = get<double>(j.at("gae"), "gamma");
  a.gae.lambda = get<double>(j.at("gae"), "lambda");
  const json& kl = j.at("kl");
  a.kl.beta_kl = get<double>(kl, "beta_kl");
  a.kl.target_kl = get<double>(kl, "target_kl");
  a.kl.adaptive = get<bool>(kl, "adaptive");
  a.kl.horizon_n = get<int>(kl, "horizon_n");
  a.rollins_per_iteration = get<std::size_t>(j, "rollins_per_iteration");
  a.restarts_per_rollin = get<int>(j, "restarts_per_rollin");
  a.guide_mc_rollouts = get<int>(j, "guide_mc_rollouts");
  a.deviation = detail::parse_deviation(get<std::string>(j, "deviation"));
  a.importance_correction = get<bool>(j, "importance_correction");
  const auto gv = get<std::string>(j, "guide_value");
  if (gv == "fitted") {
    a.guide_value = GuideValueMode::fitted;
  } else if (gv == "monte_carlo") {
    a.guide_value = GuideValueMode::monte_carlo;
  } else {
    throw Error(ErrorKind::config_parse, "unknown guide_value '" + gv + "'");
  }
  a.guide_value_fit.learning_rate = get<double>(j.at("guide_value_fit"), "learning_rate");
  a.guide_value_fit.epochs = get<int>(j.at("guide_value_fit"), "epochs");
  a.guide_value_fit.closed_form = get<bool>(j.at("guide_value_fit"), "closed_form");
  a.bc.learning_rate = get<double>(j.at("bc"), "learning_rate");
  a.bc.epochs = get<int>(j.at("bc"), "epochs");
  a.bc_demonstrations = get<std::size_t>(j, "bc_demonstrations");
  a.eps_class_states = get<std::size_t>(j, "eps_class_states");
  a.eps_class_mc = get<int>(j, "eps_class_mc");
  a.workers = get<int>(j, "workers");
  return a;
}

inline json to_json(const RunConfig& c) {
  return {
      {"name", c.name},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"task", {{"preset", c.task.preset}, {"params", c.task.params}}},
      {"guide",
       {{"kind", c.guide.kind},
        {"epsilon", c.guide.epsilon},
        {"teacher", c.guide.teacher},
        {"demonstrations", c.guide.demonstrations},
        {"bc", {{"learning_rate", c.guide.bc.learning_rate}, {"epochs", c.guide.bc.epochs}}},
        {"black_box", c.guide.black_box}}},
      {"learner",
       {{"features", to_string(c.learner.features.kind)},
        {"context", c.learner.features.context},
        {"positional", c.learner.features.positional},
        {"init", c.learner.init}}},
      {"algo", to_json(c.algo)},
      {"eval",
       {{"every", c.eval.every},
        {"episodes", c.eval.episodes},
        {"greedy", c.eval.greedy},
        {"buckets", c.eval.buckets},
        {"bucket_by", c.eval.bucket_by},
        {"bucket_episodes", c.eval.bucket_episodes},
        {"exact", c.eval.exact}}},
      {"checkpoint", {{"every", c.checkpoint.every}}},
  };
}

inline RunConfig run_config_from_json(const json& j) {
  using detail::get;
  RunConfig c;
  try {
    c.name = get<std::string>(j, "name");
    c.seed = get<std::uint64_t>(j, "seed");
    c.output_dir = get<std::string>(j, "output_dir");
    c.task.preset = get<std::string>(j.at("task"), "preset");
    c.task.params = j.at("task").at("params");
    const json& g = j.at("guide");
    c.guide.kind = get<std::string>(g, "kind");
    c.guide.epsilon = get<double>(g, "epsilon");
    c.guide.teacher = get<std::string>(g, "teacher");
    c.guide.demonstrations = get<std::size_t>(g, "demonstrations");
    c.guide.bc.learning_rate = get<double>(g.at("bc"), "learning_rate");
    c.guide.bc.epochs = get<int>(g.at("bc"), "epochs");
    c.guide.black_box = get<bool>(g, "black_box");
    const json& l = j.at("learner");
    c.learner.features.kind = detail::parse_feature_kind(get<std::string>(l, "features"));
    c.learner.features.context = get<int>(l, "context");
    c.learner.features.positional = get<bool>(l, "positional");
    c.learner.init = get<std::string>(l, "init");
    c.algo = algo_from_json(j.at("algo"));
    const json& e = j.at("eval");
    c.eval.every = get<int>(e, "every");
    c.eval.episodes = get<std::size_t>(e, "episodes");
    c.eval.greedy = get<bool>(e, "greedy");
    c.eval.buckets = get<std::size_t>(e, "buckets");
    c.eval.bucket_by = get<std::string>(e, "bucket_by");
    c.eval.bucket_episodes = get<std::size_t>(e, "bucket_episodes");
    c.eval.exact = get<bool>(e, "exact");
    c.checkpoint.every = get<int>(j.at("checkpoint"), "every");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config_parse, std::string("incomplete config: ") + e.what());
  }
  if (c.eval.bucket_by != "auto" && c.eval.bucket_by != "guide" && c.eval.bucket_by != "difficulty") {
    throw Error(ErrorKind::config_parse, "unknown bucket_by '" + c.eval.bucket_by + "'");
  }
  try {
    c.algo.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::config_parse, e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Resolution: code defaults <- preset parameters <- config file <- --set.

/// Recursively copies `patch` onto `base`. Keys absent from `base` are
/// rejected, except below `open_prefix`-matched paths.
inline void strict_merge(json& base, const json& patch, const std::string& path = "") {
  if (!patch.is_object()) throw Error(ErrorKind::config_parse, "expected an object at '" + path + "'");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw Error(ErrorKind::config_parse, "unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object() && key != "task.params.prompts") {
      strict_merge(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

/// Parses "a.b.c=value"; the value is read as JSON when possible, otherwise
/// as a string.
inline void apply_override(json& target, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorKind::config_parse, "override must look like key=value: '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &target;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw Error(ErrorKind::config_parse, "bad override key '" + key + "'");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

inline json default_config_json(const std::string& preset = "needle_suffix.tiny") {
  RunConfig c;
  c.task.preset = preset;
  c.task.params = preset_params(preset);
  return to_json(c);
}

/// Defaults that depend on the task: the KL coefficient and the guide kind
/// when the task is too large for the exact oracle.
inline json task_defaults(const std::string& preset) {
  json j = default_config_json(preset);
  const TaskSpec task = build_task(TaskConfig{preset, preset_params(preset)});
  j["algo"]["kl"]["beta_kl"] = task.default_beta_kl;
  if (StateSpace::required_nodes(task) > StateSpace::default_budget) {
    j["guide"]["kind"] = "heuristic";
    j["learner"]["features"] = "window";
  } else {
    j["learner"]["features"] = "tabular";
  }
  return j;
}

inline json resolve_config_json(const json& user, const std::vector<std::string>& overrides = {}) {
  json patched = user.is_null() ? json::object() : user;
  for (const auto& o : overrides) apply_override(patched, o);
  std::string preset = "needle_suffix.tiny";
  if (patched.contains("task") && patched["task"].contains("preset")) {
    if (!patched["task"]["preset"].is_string()) throw Error(ErrorKind::config_parse, "task.preset must be a string");
    preset = patched["task"]["preset"].get<std::string>();
  }
  json resolved = task_defaults(preset);
  strict_merge(resolved, patched);
  return resolved;
}

inline RunConfig resolve_config(const json& user, const std::vector<std::string>& overrides = {}) {
  return run_config_from_json(resolve_config_json(user, overrides));
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config_parse, path + ": " + e.what());
  }
}

}  // namespace l2s::harness
