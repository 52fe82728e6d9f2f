#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "salsa/acquisition.hpp"
#include "salsa/errors.hpp"
#include "salsa/external_scorer.hpp"
#include "salsa/oracle.hpp"
#include "salsa/space.hpp"
#include "salsa/surrogate.hpp"

namespace salsa {

using json = nlohmann::json;

enum class Method { salsa, random, tabular_ts, pool_al };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::salsa: return "salsa";
    case Method::random: return "random";
    case Method::tabular_ts: return "tabular-ts";
    case Method::pool_al: return "pool-al";
  }
  throw Error("unreachable method");
}

inline Method parse_method(const std::string& s) {
  if (s == "salsa") return Method::salsa;
  if (s == "random") return Method::random;
  if (s == "tabular-ts") return Method::tabular_ts;
  if (s == "pool-al") return Method::pool_al;
  throw ConfigError("unknown method '" + s + "'");
}

struct SpaceSpec {
  std::string kind = "generate";  // generate | files
  std::vector<std::uint64_t> sizes = {100, 100};
  int feature_dim = 16;
  std::uint64_t seed = 0;
  std::vector<std::string> files;
  std::vector<std::uint64_t> subsample;  // optional; 0 entries = use all
};

struct MpoComponentSpec {
  std::string kind = "additive";  // synthetic leaf kinds only
  std::uint64_t seed = 0;
  double noise_std = 0.0;
  double lambda = 0.0;
  double weight = 1.0;
  double lo = 0.0;
  double hi = 1.0;
};

struct ObjectiveSpec {
  std::string kind = "additive";  // additive | bilinear | noisy-additive |
                                  // mpo | external
  std::uint64_t seed = 0;
  double noise_std = 0.0;
  double lambda = 0.0;
  std::vector<MpoComponentSpec> components;
  std::string command;       // external
  int timeout_ms = 300000;   // external
};

struct SurrogateSpec {
  std::string mode = "per-vector";  // per-vector | one-model
  std::string uncertainty = "mve";  // mve | dropout
  int hidden_width = 300;
  int hidden_layers = 2;
  int max_epochs = 50;
  int batch_size = 64;
  double holdout_fraction = 0.20;
  int patience = 10;
  double lr_warmup = 1e-4;
  double lr_peak = 1e-3;
  double lr_final = 1e-4;
  double weight_decay = 0.0;
  double variance_floor = 1e-6;
  double dropout_p = 0.2;
  int dropout_passes = 10;
};

struct StrategySpec {
  std::string kind = "ts";
  double epsilon = 0.05;
  double beta = 2.0;
};

struct TabularSpec {
  int warmup_trials = 2;
  std::string prior = "auto";  // auto | fixed
  double prior_mean = 0.0;
  double prior_var = 1.0;
  double obs_var = 1.0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string method = "salsa";
  int rounds = 10;                 // N
  std::uint64_t per_round = 100;   // K
  std::uint64_t rho_max = 0;       // 0 -> 10 * K
  std::uint64_t ground_truth_k = 0;  // 0 disables recall tracking
  std::uint64_t enumeration_cap = 2'000'000;
  bool checkpoints = true;
  std::uint64_t acq_prob_draws = 0;  // Monte-Carlo draws for heatmap export
  std::string output_dir;
  SpaceSpec space;
  ObjectiveSpec objective;
  SurrogateSpec surrogate;
  StrategySpec strategy;
  TabularSpec tabular;

  std::uint64_t budget() const {
    return static_cast<std::uint64_t>(rounds) * per_round;
  }
  std::uint64_t effective_rho_max() const {
    return rho_max == 0 ? 10 * per_round : rho_max;
  }

  void validate() const;
};

namespace detail {

// Tracks which keys a parser consumed so leftovers can be reported as
// config errors instead of silently ignored.
class KeyChecker {
 public:
  KeyChecker(const json& j, std::string context)
      : j_(j), context_(std::move(context)) {
    if (!j.is_object()) {
      throw ConfigError("config section '" + context_ + "' must be an object");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + path(key) + "': " + e.what());
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.contains(item.key())) {
        throw ConfigError("unknown config key '" + path(item.key().c_str()) +
                          "'");
      }
    }
  }

  std::string path(const char* key) const {
    return context_.empty() ? key : context_ + "." + key;
  }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline void RunConfig::validate() const {
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (per_round < 1) throw ConfigError("per_round must be >= 1");
  if (rho_max != 0 && rho_max < per_round) {
    throw ConfigError("rho_max must be 0 (auto) or >= per_round");
  }
  parse_method(method);
  parse_strategy(strategy.kind);
  if (strategy.epsilon < 0 || strategy.epsilon > 1) {
    throw ConfigError("strategy.epsilon must be in [0,1]");
  }
  if (strategy.beta < 0) throw ConfigError("strategy.beta must be >= 0");
  if (space.kind != "generate" && space.kind != "files") {
    throw ConfigError("space.kind must be 'generate' or 'files'");
  }
  if (space.kind == "generate") {
    if (space.sizes.size() < 2) {
      throw ConfigError("space.sizes needs >= 2 vectors");
    }
    for (auto s : space.sizes) {
      if (s == 0) throw ConfigError("space.sizes entries must be >= 1");
    }
    if (space.feature_dim < 1) {
      throw ConfigError("space.feature_dim must be >= 1");
    }
  } else if (space.files.size() < 2) {
    throw ConfigError("space.files needs >= 2 paths");
  }
  if (!space.subsample.empty()) {
    const std::size_t n = space.kind == "generate" ? space.sizes.size()
                                                   : space.files.size();
    if (space.subsample.size() != n) {
      throw ConfigError("space.subsample must list one count per vector");
    }
  }
  const std::set<std::string> objective_kinds = {
      "additive", "bilinear", "noisy-additive", "mpo", "external"};
  if (!objective_kinds.contains(objective.kind)) {
    throw ConfigError("unknown objective.kind '" + objective.kind + "'");
  }
  if (objective.kind == "mpo" && objective.components.empty()) {
    throw ConfigError("objective.kind 'mpo' needs components");
  }
  if (objective.kind == "external" && objective.command.empty()) {
    throw ConfigError("objective.kind 'external' needs a command");
  }
  if (objective.noise_std < 0) {
    throw ConfigError("objective.noise_std must be >= 0");
  }
  if (surrogate.mode != "per-vector" && surrogate.mode != "one-model") {
    throw ConfigError("surrogate.mode must be 'per-vector' or 'one-model'");
  }
  if (surrogate.uncertainty != "mve" && surrogate.uncertainty != "dropout") {
    throw ConfigError("surrogate.uncertainty must be 'mve' or 'dropout'");
  }
  if (tabular.warmup_trials < 1) {
    throw ConfigError("tabular.warmup_trials must be >= 1");
  }
  if (tabular.prior != "auto" && tabular.prior != "fixed") {
    throw ConfigError("tabular.prior must be 'auto' or 'fixed'");
  }
}

inline RunConfig parse_run_config(const json& j) {
  RunConfig c;
  detail::KeyChecker top(j, "");
  top.read("seed", c.seed);
  top.read("method", c.method);
  top.read("rounds", c.rounds);
  top.read("per_round", c.per_round);
  top.read("rho_max", c.rho_max);
  top.read("ground_truth_k", c.ground_truth_k);
  top.read("enumeration_cap", c.enumeration_cap);
  top.read("checkpoints", c.checkpoints);
  top.read("acq_prob_draws", c.acq_prob_draws);
  top.read("output_dir", c.output_dir);
  if (top.has("space")) {
    detail::KeyChecker k(top.raw("space"), "space");
    k.read("kind", c.space.kind);
    k.read("sizes", c.space.sizes);
    k.read("feature_dim", c.space.feature_dim);
    k.read("seed", c.space.seed);
    k.read("files", c.space.files);
    k.read("subsample", c.space.subsample);
    k.finish();
  }
  if (top.has("objective")) {
    detail::KeyChecker k(top.raw("objective"), "objective");
    k.read("kind", c.objective.kind);
    k.read("seed", c.objective.seed);
    k.read("noise_std", c.objective.noise_std);
    k.read("lambda", c.objective.lambda);
    k.read("command", c.objective.command);
    k.read("timeout_ms", c.objective.timeout_ms);
    if (k.has("components")) {
      const json& comps = k.raw("components");
      if (!comps.is_array()) {
        throw ConfigError("objective.components must be an array");
      }
      for (std::size_t i = 0; i < comps.size(); ++i) {
        detail::KeyChecker ck(comps[i],
                              "objective.components[" + std::to_string(i) +
                                  "]");
        MpoComponentSpec m;
        ck.read("kind", m.kind);
        ck.read("seed", m.seed);
        ck.read("noise_std", m.noise_std);
        ck.read("lambda", m.lambda);
        ck.read("weight", m.weight);
        ck.read("lo", m.lo);
        ck.read("hi", m.hi);
        ck.finish();
        c.objective.components.push_back(m);
      }
    }
    k.finish();
  }
  if (top.has("surrogate")) {
    detail::KeyChecker k(top.raw("surrogate"), "surrogate");
    k.read("mode", c.surrogate.mode);
    k.read("uncertainty", c.surrogate.uncertainty);
    k.read("hidden_width", c.surrogate.hidden_width);
    k.read("hidden_layers", c.surrogate.hidden_layers);
    k.read("max_epochs", c.surrogate.max_epochs);
    k.read("batch_size", c.surrogate.batch_size);
    k.read("holdout_fraction", c.surrogate.holdout_fraction);
    k.read("patience", c.surrogate.patience);
    k.read("lr_warmup", c.surrogate.lr_warmup);
    k.read("lr_peak", c.surrogate.lr_peak);
    k.read("lr_final", c.surrogate.lr_final);
    k.read("weight_decay", c.surrogate.weight_decay);
    k.read("variance_floor", c.surrogate.variance_floor);
    k.read("dropout_p", c.surrogate.dropout_p);
    k.read("dropout_passes", c.surrogate.dropout_passes);
    k.finish();
  }
  if (top.has("strategy")) {
    detail::KeyChecker k(top.raw("strategy"), "strategy");
    k.read("kind", c.strategy.kind);
    k.read("epsilon", c.strategy.epsilon);
    k.read("beta", c.strategy.beta);
    k.finish();
  }
  if (top.has("tabular")) {
    detail::KeyChecker k(top.raw("tabular"), "tabular");
    k.read("warmup_trials", c.tabular.warmup_trials);
    k.read("prior", c.tabular.prior);
    k.read("prior_mean", c.tabular.prior_mean);
    k.read("prior_var", c.tabular.prior_var);
    k.read("obs_var", c.tabular.obs_var);
    k.finish();
  }
  top.finish();
  c.validate();
  return c;
}

inline json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["method"] = c.method;
  j["rounds"] = c.rounds;
  j["per_round"] = c.per_round;
  j["rho_max"] = c.rho_max;
  j["ground_truth_k"] = c.ground_truth_k;
  j["enumeration_cap"] = c.enumeration_cap;
  j["checkpoints"] = c.checkpoints;
  j["acq_prob_draws"] = c.acq_prob_draws;
  j["output_dir"] = c.output_dir;
  j["space"] = {{"kind", c.space.kind},
                {"sizes", c.space.sizes},
                {"feature_dim", c.space.feature_dim},
                {"seed", c.space.seed},
                {"files", c.space.files},
                {"subsample", c.space.subsample}};
  json comps = json::array();
  for (const auto& m : c.objective.components) {
    comps.push_back({{"kind", m.kind},
                     {"seed", m.seed},
                     {"noise_std", m.noise_std},
                     {"lambda", m.lambda},
                     {"weight", m.weight},
                     {"lo", m.lo},
                     {"hi", m.hi}});
  }
  j["objective"] = {{"kind", c.objective.kind},
                    {"seed", c.objective.seed},
                    {"noise_std", c.objective.noise_std},
                    {"lambda", c.objective.lambda},
                    {"components", comps},
                    {"command", c.objective.command},
                    {"timeout_ms", c.objective.timeout_ms}};
  j["surrogate"] = {{"mode", c.surrogate.mode},
                    {"uncertainty", c.surrogate.uncertainty},
                    {"hidden_width", c.surrogate.hidden_width},
                    {"hidden_layers", c.surrogate.hidden_layers},
                    {"max_epochs", c.surrogate.max_epochs},
                    {"batch_size", c.surrogate.batch_size},
                    {"holdout_fraction", c.surrogate.holdout_fraction},
                    {"patience", c.surrogate.patience},
                    {"lr_warmup", c.surrogate.lr_warmup},
                    {"lr_peak", c.surrogate.lr_peak},
                    {"lr_final", c.surrogate.lr_final},
                    {"weight_decay", c.surrogate.weight_decay},
                    {"variance_floor", c.surrogate.variance_floor},
                    {"dropout_p", c.surrogate.dropout_p},
                    {"dropout_passes", c.surrogate.dropout_passes}};
  j["strategy"] = {{"kind", c.strategy.kind},
                   {"epsilon", c.strategy.epsilon},
                   {"beta", c.strategy.beta}};
  j["tabular"] = {{"warmup_trials", c.tabular.warmup_trials},
                  {"prior", c.tabular.prior},
                  {"prior_mean", c.tabular.prior_mean},
                  {"prior_var", c.tabular.prior_var},
                  {"obs_var", c.tabular.obs_var}};
  return j;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " +
                      e.what());
  }
  return parse_run_config(j);
}

// Applies a `--set dotted.path=value` override onto the raw JSON tree.
// The value is parse as JSON when possible (numbers, booleans, arrays),
// otherwise taken as a string.
inline void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  const std::string dotted = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // plain string
  }
  json* node = &root;
  std::size_t pos = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', pos);
    const std::string key = dotted.substr(
        pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (key.empty()) {
      throw ConfigError("override '" + assignment + "' has an empty segment");
    }
    if (dot == std::string::npos) {
      (*node)[key] = parsed;
      break;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    if (!node->is_object()) {
      throw ConfigError("override path '" + dotted +
                        "' crosses a non-object value");
    }
    pos = dot + 1;
  }
}

// --- Factories -------------------------------------------------------------

inline std::shared_ptr<const ProductSpace> build_space_from_spec(
    const SpaceSpec& spec) {
  std::vector<SynthonSet> sets;
  if (spec.kind == "generate") {
    for (std::size_t v = 0; v < spec.sizes.size(); ++v) {
      sets.push_back(generate_synthon_set(static_cast<int>(v), spec.sizes[v],
                                          spec.feature_dim, spec.seed));
    }
  } else {
    for (std::size_t v = 0; v < spec.files.size(); ++v) {
      sets.push_back(load_synthon_set(spec.files[v], static_cast<int>(v)));
    }
  }
  auto space = std::make_shared<ProductSpace>(std::move(sets));
  if (!spec.subsample.empty()) {
    bool any = false;
    for (auto s : spec.subsample) any = any || s != 0;
    if (any) {
      std::vector<std::uint64_t> counts = spec.subsample;
      for (std::size_t v = 0; v < counts.size(); ++v) {
        if (counts[v] == 0) counts[v] = space->set(v).size();
      }
      space = std::make_shared<ProductSpace>(
          subsample(*space, counts, spec.seed));
    }
  }
  return space;
}

inline SyntheticOracleSpec::Kind parse_synthetic_kind(const std::string& s) {
  if (s == "additive") return SyntheticOracleSpec::Kind::additive;
  if (s == "bilinear") return SyntheticOracleSpec::Kind::bilinear;
  if (s == "noisy-additive") return SyntheticOracleSpec::Kind::noisy_additive;
  throw ConfigError("'" + s + "' is not a synthetic objective kind");
}

inline std::unique_ptr<ObjectiveFn> make_objective(
    const ObjectiveSpec& spec, std::shared_ptr<const ProductSpace> space) {
  if (spec.kind == "external") {
    ExternalScorerConfig cfg;
    cfg.command = spec.command;
    cfg.timeout_ms = spec.timeout_ms;
    return std::make_unique<ExternalObjective>(std::move(cfg),
                                               std::move(space));
  }
  if (spec.kind == "mpo") {
    std::vector<MpoComponent> comps;
    for (const auto& m : spec.components) {
      SyntheticOracleSpec s;
      s.kind = parse_synthetic_kind(m.kind);
      s.seed = m.seed;
      s.noise_std = m.noise_std;
      s.lambda = m.lambda;
      comps.push_back({std::make_shared<SyntheticOracle>(s, space), m.weight,
                       m.lo, m.hi});
    }
    return std::make_unique<MpoObjective>(std::move(comps));
  }
  SyntheticOracleSpec s;
  s.kind = parse_synthetic_kind(spec.kind);
  s.seed = spec.seed;
  s.noise_std = spec.noise_std;
  s.lambda = spec.lambda;
  return std::make_unique<SyntheticOracle>(s, std::move(space));
}

inline SurrogateConfig make_surrogate_config(const SurrogateSpec& s) {
  SurrogateConfig c;
  c.mode = s.mode == "one-model" ? SurrogateMode::one_model
                                 : SurrogateMode::per_vector;
  c.regressor.hidden_width = s.hidden_width;
  c.regressor.hidden_layers = s.hidden_layers;
  c.regressor.max_epochs = s.max_epochs;
  c.regressor.batch_size = s.batch_size;
  c.regressor.holdout_fraction = s.holdout_fraction;
  c.regressor.patience = s.patience;
  c.regressor.lr_warmup = s.lr_warmup;
  c.regressor.lr_peak = s.lr_peak;
  c.regressor.lr_final = s.lr_final;
  c.regressor.weight_decay = s.weight_decay;
  c.regressor.variance_floor = s.variance_floor;
  c.regressor.uncertainty = s.uncertainty == "dropout"
                                ? UncertaintyMode::dropout
                                : UncertaintyMode::mve;
  c.regressor.dropout_p = s.dropout_p;
  c.regressor.dropout_passes = s.dropout_passes;
  c.regressor.validate();
  return c;
}

inline StrategyConfig make_strategy_config(const StrategySpec& s) {
  StrategyConfig c;
  c.kind = parse_strategy(s.kind);
  c.epsilon = s.epsilon;
  c.beta = s.beta;
  c.validate();
  return c;
}

}  // namespace salsa
