#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "factor_timing/dataio.hpp"
#include "factor_timing/error.hpp"
#include "factor_timing/harness.hpp"
#include "factor_timing/stats.hpp"

namespace factor_timing {

struct TimingConfig {
  double gamma = 2.0;  // risk aversion
  std::optional<double> weight_cap;

  void validate() const {
    if (!(gamma > 0.0)) throw Error(ErrorCode::invalid_config, "gamma must be > 0");
    if (weight_cap && !(*weight_cap > 0.0)) throw Error(ErrorCode::invalid_config, "weight_cap must be > 0");
  }
};

/// Realized factor returns keyed by month (ascending).
struct ReturnSeries {
  std::vector<Month> months;
  std::vector<double> values;

  std::size_t size() const noexcept { return months.size(); }

  /// Number of observations with month <= m.
  std::size_t count_through(Month m) const {
    return static_cast<std::size_t>(std::upper_bound(months.begin(), months.end(), m) - months.begin());
  }
};

inline ReturnSeries realized_returns(const AlignedDataset& ds) { return {ds.months(), ds.target()}; }

/// Sample variance (n - 1) of every return from the series start through
/// `upto` inclusive.
inline double expanding_variance(const ReturnSeries& returns, Month upto) {
  const auto n = returns.count_through(upto);
  if (n < 2)
    throw Error(ErrorCode::too_few_observations,
                "need 2 returns through " + std::to_string(upto.yyyymm()) + ", have " + std::to_string(n));
  std::span<const double> window(returns.values.data(), n);
  if (stats::all_equal(window)) throw Error(ErrorCode::zero_variance, "returns through " + std::to_string(upto.yyyymm()) + " are constant");
  return stats::sample_variance(window);
}

/// Mean-variance weight forecast / (gamma * variance), optionally clipped.
inline double optimal_weight(double forecast, double variance, const TimingConfig& cfg) {
  if (!(variance > 0.0)) throw Error(ErrorCode::nonpositive_variance, "variance must be > 0");
  double w = forecast / (cfg.gamma * variance);
  if (cfg.weight_cap) w = std::clamp(w, -*cfg.weight_cap, *cfg.weight_cap);
  return w;
}

struct WeightSeries {
  std::vector<Month> months;
  std::vector<double> weight;
  std::vector<double> variance_used;

  std::size_t size() const noexcept { return months.size(); }
};

/// Weight at test month t from the forecast of t and the expanding variance
/// of realized returns through t-1.
inline WeightSeries timed_weights(const ForecastSeries& fs, const ReturnSeries& realized, const TimingConfig& cfg) {
  cfg.validate();
  WeightSeries ws;
  ws.months = fs.months;
  ws.weight.reserve(fs.size());
  ws.variance_used.reserve(fs.size());
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const double var = expanding_variance(realized, fs.months[i].prev());
    ws.variance_used.push_back(var);
    ws.weight.push_back(optimal_weight(fs.forecast[i], var, cfg));
  }
  return ws;
}

/// Unconditional benchmark weight mean(train) / (gamma * var(train)).
inline double constant_weight(std::span<const double> train_returns, const TimingConfig& cfg) {
  cfg.validate();
  if (train_returns.size() < 2) throw Error(ErrorCode::too_few_observations, "need at least 2 training returns");
  if (stats::all_equal(train_returns)) throw Error(ErrorCode::zero_variance, "training returns are constant");
  return optimal_weight(stats::mean(train_returns), stats::sample_variance(train_returns), cfg);
}

/// The benchmark weight repeated over `months`.
inline WeightSeries constant_weights(const std::vector<Month>& months, std::span<const double> train_returns,
                                     const TimingConfig& cfg) {
  const double w = constant_weight(train_returns, cfg);
  const double var = stats::sample_variance(train_returns);
  return {months, std::vector<double>(months.size(), w), std::vector<double>(months.size(), var)};
}

inline void write_weights_csv(std::ostream& os, const WeightSeries& ws) {
  os << "yyyymm,weight,variance_used\n";
  for (std::size_t i = 0; i < ws.size(); ++i)
    os << ws.months[i].yyyymm() << ',' << format_double(ws.weight[i]) << ',' << format_double(ws.variance_used[i])
       << '\n';
}

}  // namespace factor_timing
