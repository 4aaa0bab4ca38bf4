#pragma once

/**
 * @file config.hpp
 * @brief Declarative run configuration (JSON) and its resolved echo.
 *
 * Relative data paths resolve against the directory of the config file.
 * Every key is optional; missing keys take the defaults shown by
 * `RunConfig{}` and are written back out in full by `to_json`, so the echo
 * in an output directory fully determines a run.
 */

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "factor_timing/backtest.hpp"
#include "factor_timing/dataio.hpp"
#include "factor_timing/error.hpp"
#include "factor_timing/model_spec.hpp"
#include "factor_timing/timing.hpp"

namespace factor_timing {

using Json = nlohmann::ordered_json;

struct NamedModel {
  std::string name;
  ModelSpec spec;
};

struct RunConfig {
  std::filesystem::path factors_path = "data/factors.csv";
  Unit factors_unit = Unit::percent;
  std::filesystem::path predictors_path = "data/predictors.csv";
  Unit predictors_unit = Unit::decimal;
  SplitSpec split = SplitSpec::standard();
  std::vector<std::string> features = default_features();
  std::string target = "cma";
  std::vector<NamedModel> models = default_models();
  TimingConfig timing;
  std::vector<CostModel> costs = default_costs();
  std::vector<int> rebalance_grid = default_interval_grid();
  double validation_fraction = 0.40;
  double initial_wealth = 1.0;
  bool charge_entry = true;
  std::vector<PeriodSpec> periods = default_periods();
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;

  static std::vector<NamedModel> default_models() {
    return {{"ols_ct", ModelSpec::ols_ct()},
            {"ridge", ModelSpec::ridge(1.0)},
            {"random_forest", ModelSpec::random_forest()},
            {"nn3", ModelSpec::nn3()}};
  }

  /// No cost, proportional 10 / 20 / 50 bps, quadratic 50 bps.
  static std::vector<CostModel> default_costs() {
    return {CostModel::none(), CostModel::proportional(0.0010), CostModel::proportional(0.0020),
            CostModel::proportional(0.0050), CostModel::quadratic(0.0050)};
  }

  /// Applies the base seed to every model that did not pin its own.
  void apply_seed(std::uint64_t base, const std::vector<bool>& pinned) {
    seed = base;
    for (std::size_t i = 0; i < models.size(); ++i)
      if (i >= pinned.size() || !pinned[i]) models[i].spec.seed = base;
  }

  void validate() const {
    if (models.empty()) throw Error(ErrorCode::invalid_config, "at least one model is required");
    for (std::size_t i = 0; i < models.size(); ++i) {
      const auto& m = models[i];
      if (m.name.empty() || m.name.find_first_of("/\\ ,") != std::string::npos || m.name == "constant")
        throw Error(ErrorCode::invalid_config, "invalid model name '" + m.name + "'");
      for (std::size_t j = 0; j < i; ++j)
        if (models[j].name == m.name) throw Error(ErrorCode::invalid_config, "duplicate model name '" + m.name + "'");
      m.spec.validate();
    }
    timing.validate();
    for (const auto& c : costs) c.validate();
    if (costs.empty()) throw Error(ErrorCode::invalid_config, "at least one cost model is required");
    if (rebalance_grid.empty()) throw Error(ErrorCode::invalid_config, "rebalance grid is empty");
    for (int k : rebalance_grid)
      if (k < 1) throw Error(ErrorCode::invalid_config, "rebalance intervals must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw Error(ErrorCode::invalid_config, "validation_fraction must lie in (0, 1)");
    if (!(initial_wealth > 0.0)) throw Error(ErrorCode::invalid_config, "initial_wealth must be > 0");
    if (features.empty()) throw Error(ErrorCode::invalid_config, "feature list is empty");
    if (threads < 1) throw Error(ErrorCode::invalid_config, "threads must be >= 1");
    for (const auto& p : periods)
      if (p.end < p.start) throw Error(ErrorCode::invalid_config, "period '" + p.label + "' ends before it starts");
  }
};

namespace detail {

inline Unit parse_unit(const std::string& s) {
  if (s == "percent") return Unit::percent;
  if (s == "decimal") return Unit::decimal;
  throw Error(ErrorCode::invalid_config, "unit must be 'percent' or 'decimal', got '" + s + "'");
}

inline const char* unit_name(Unit u) { return u == Unit::percent ? "percent" : "decimal"; }

inline Month month_from_json(const Json& j, const char* key) {
  if (!j.is_number_integer()) throw Error(ErrorCode::invalid_config, std::string(key) + " must be a YYYYMM integer");
  auto m = Month::try_from_yyyymm(j.get<std::int64_t>());
  if (!m) throw Error(ErrorCode::invalid_config, std::string(key) + " is not a valid YYYYMM month");
  return *m;
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_config, std::string("key '") + key + "': " + e.what());
  }
}

inline ModelSpec model_from_json(const Json& j, bool& seed_pinned) {
  auto spec = ModelSpec::with_kind(parse_model_kind(get_or<std::string>(j, "kind", "")));
  spec.ridge_lambda = get_or(j, "ridge_lambda", spec.ridge_lambda);
  spec.forest.n_trees = get_or(j, "n_trees", spec.forest.n_trees);
  spec.forest.max_leaf_nodes = get_or(j, "max_leaf_nodes", spec.forest.max_leaf_nodes);
  spec.forest.feature_subsample = get_or(j, "feature_subsample", spec.forest.feature_subsample);
  spec.forest.bootstrap = get_or(j, "bootstrap", spec.forest.bootstrap);
  spec.mlp.layer_widths = get_or(j, "layer_widths", spec.mlp.layer_widths);
  spec.mlp.epochs = get_or(j, "epochs", spec.mlp.epochs);
  spec.mlp.learning_rate = get_or(j, "learning_rate", spec.mlp.learning_rate);
  spec.ct_truncate = get_or(j, "ct_truncate", spec.ct_truncate);
  spec.ct_slope_signs = get_or(j, "ct_slope_signs", spec.ct_slope_signs);
  seed_pinned = j.contains("seed") && !j.at("seed").is_null();
  spec.seed = get_or<std::uint64_t>(j, "seed", spec.seed);
  return spec;
}

inline Json model_to_json(const NamedModel& m) {
  Json j;
  j["name"] = m.name;
  j["kind"] = std::string(to_string(m.spec.kind));
  switch (m.spec.kind) {
    case ModelKind::ols_ct:
      j["ct_truncate"] = m.spec.ct_truncate;
      j["ct_slope_signs"] = m.spec.ct_slope_signs;
      break;
    case ModelKind::ridge:
      j["ridge_lambda"] = m.spec.ridge_lambda;
      break;
    case ModelKind::random_forest:
      j["n_trees"] = m.spec.forest.n_trees;
      j["max_leaf_nodes"] = m.spec.forest.max_leaf_nodes;
      j["feature_subsample"] = m.spec.forest.feature_subsample;
      j["bootstrap"] = m.spec.forest.bootstrap;
      break;
    case ModelKind::nn3:
      j["layer_widths"] = m.spec.mlp.layer_widths;
      j["epochs"] = m.spec.mlp.epochs;
      j["learning_rate"] = m.spec.mlp.learning_rate;
      break;
  }
  j["seed"] = m.spec.seed;
  return j;
}

}  // namespace detail

/// Parses a config document. `base_dir` anchors relative data paths.
inline RunConfig config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  using detail::get_or;
  if (!j.is_object()) throw Error(ErrorCode::invalid_config, "config root must be an object");
  RunConfig c;
  std::vector<bool> pinned;

  if (j.contains("data")) {
    const auto& d = j.at("data");
    c.factors_path = get_or<std::string>(d, "factors", c.factors_path.string());
    c.predictors_path = get_or<std::string>(d, "predictors", c.predictors_path.string());
    c.factors_unit = detail::parse_unit(get_or<std::string>(d, "factors_unit", "percent"));
    c.predictors_unit = detail::parse_unit(get_or<std::string>(d, "predictors_unit", "decimal"));
  }
  if (!base_dir.empty()) {
    if (c.factors_path.is_relative()) c.factors_path = base_dir / c.factors_path;
    if (c.predictors_path.is_relative()) c.predictors_path = base_dir / c.predictors_path;
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    const auto def = SplitSpec::standard();
    auto month_or = [&](const char* key, Month fallback) {
      return s.contains(key) ? detail::month_from_json(s.at(key), key) : fallback;
    };
    try {
      c.split = SplitSpec(month_or("train_start", def.train_start()), month_or("train_end", def.train_end()),
                          month_or("test_start", def.test_start()), month_or("test_end", def.test_end()));
    } catch (const Error& e) {
      throw Error(ErrorCode::invalid_config, std::string("split: ") + e.what());
    }
  }
  c.features = get_or(j, "features", c.features);
  c.target = get_or(j, "target", c.target);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.threads = get_or(j, "threads", c.threads);

  if (j.contains("models")) {
    if (!j.at("models").is_array()) throw Error(ErrorCode::invalid_config, "models must be an array");
    c.models.clear();
    for (const auto& m : j.at("models")) {
      bool pin = false;
      auto spec = detail::model_from_json(m, pin);
      c.models.push_back({get_or<std::string>(m, "name", std::string(to_string(spec.kind))), spec});
      pinned.push_back(pin);
    }
  }
  if (j.contains("timing")) {
    const auto& t = j.at("timing");
    c.timing.gamma = get_or(t, "gamma", c.timing.gamma);
    if (t.contains("weight_cap") && !t.at("weight_cap").is_null()) c.timing.weight_cap = t.at("weight_cap").get<double>();
  }
  if (j.contains("costs")) {
    c.costs.clear();
    for (const auto& cj : j.at("costs"))
      c.costs.push_back({parse_cost_kind(get_or<std::string>(cj, "kind", "none")), get_or(cj, "rate", 0.0)});
  }
  if (j.contains("rebalance")) {
    const auto& r = j.at("rebalance");
    c.rebalance_grid = get_or(r, "grid", c.rebalance_grid);
    c.validation_fraction = get_or(r, "validation_fraction", c.validation_fraction);
  }
  if (j.contains("backtest")) {
    const auto& b = j.at("backtest");
    c.initial_wealth = get_or(b, "initial_wealth", c.initial_wealth);
    c.charge_entry = get_or(b, "charge_entry", c.charge_entry);
  }
  if (j.contains("periods")) {
    c.periods.clear();
    for (const auto& p : j.at("periods"))
      c.periods.push_back({get_or<std::string>(p, "label", ""), detail::month_from_json(p.at("start"), "start"),
                           detail::month_from_json(p.at("end"), "end")});
  }
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir.string());
  c.apply_seed(c.seed, pinned);
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::invalid_config, "cannot open config file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_config, path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

/// Fully resolved config, suitable for echoing next to the outputs.
inline Json to_json(const RunConfig& c) {
  Json j;
  j["data"] = {{"factors", c.factors_path.generic_string()},
               {"factors_unit", detail::unit_name(c.factors_unit)},
               {"predictors", c.predictors_path.generic_string()},
               {"predictors_unit", detail::unit_name(c.predictors_unit)}};
  j["split"] = {{"train_start", c.split.train_start().yyyymm()},
                {"train_end", c.split.train_end().yyyymm()},
                {"test_start", c.split.test_start().yyyymm()},
                {"test_end", c.split.test_end().yyyymm()}};
  j["features"] = c.features;
  j["target"] = c.target;
  j["models"] = Json::array();
  for (const auto& m : c.models) j["models"].push_back(detail::model_to_json(m));
  j["timing"] = {{"gamma", c.timing.gamma}, {"weight_cap", nullptr}};
  if (c.timing.weight_cap) j["timing"]["weight_cap"] = *c.timing.weight_cap;
  j["costs"] = Json::array();
  for (const auto& cm : c.costs) j["costs"].push_back({{"kind", std::string(to_string(cm.kind))}, {"rate", cm.rate}});
  j["rebalance"] = {{"grid", c.rebalance_grid}, {"validation_fraction", c.validation_fraction}};
  j["backtest"] = {{"initial_wealth", c.initial_wealth}, {"charge_entry", c.charge_entry}};
  j["periods"] = Json::array();
  for (const auto& p : c.periods)
    j["periods"].push_back({{"label", p.label}, {"start", p.start.yyyymm()}, {"end", p.end.yyyymm()}});
  j["output_dir"] = c.output_dir.generic_string();
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

/// Digest of the resolved config. Thread count and output location do not
/// affect results and are excluded.
inline std::string config_digest(const RunConfig& c) {
  auto j = to_json(c);
  j.erase("threads");
  j.erase("output_dir");
  return hex64(fnv1a64(j.dump()));
}

}  // namespace factor_timing
