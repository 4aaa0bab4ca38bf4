#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <concepts>
#include <cmath>
#include <exception>
#include <ostream>
#include <thread>
#include <vector>

#include "factor_timing/dataio.hpp"
#include "factor_timing/error.hpp"
#include "factor_timing/model.hpp"
#include "factor_timing/rng.hpp"

namespace factor_timing {

/// One-step-ahead forecasts over the test months. forecast[i] predicts
/// actual[i] using information through the previous month.
struct ForecastSeries {
  std::vector<Month> months;
  std::vector<double> forecast;
  std::vector<double> actual;

  std::size_t size() const noexcept { return months.size(); }
};

namespace detail {

inline Error with_month(const Error& e, Month m) {
  return Error(e.code(), "forecast for " + std::to_string(m.yyyymm()) + ": " + e.what());
}

/// Runs body(i) for i in [0, n) on up to n_threads workers and rethrows the
/// failure with the lowest index, so errors match sequential order.
template <class Body>
void parallel_for(std::size_t n, int n_threads, Body&& body) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, n_threads)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) {
          try {
            body(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Expanding-window driver. For each test month t, `forecast_one` receives
/// every row from the training start through t-1 and the feature row of t:
///
///     double forecast_one(const Eigen::MatrixXd& X_train, const Eigen::VectorXd& y_train,
///                         const Eigen::VectorXd& x_t, Month t);
///
/// Refits may run on `n_threads` workers; output is identical to sequential.
template <class ForecastFn>
  requires std::invocable<ForecastFn&, const Eigen::MatrixXd&, const Eigen::VectorXd&, const Eigen::VectorXd&, Month>
ForecastSeries expanding_window_forecast(const AlignedDataset& ds, const SplitSpec& split, ForecastFn&& forecast_one,
                                         int n_threads = 1) {
  const auto [tb, te] = ds.range_of(split.train_start(), split.train_end());
  const auto [sb, se] = ds.range_of(split.test_start(), split.test_end());
  if (tb == te) throw Error(ErrorCode::empty_partition, "training range holds no usable months");
  if (sb == se) throw Error(ErrorCode::empty_partition, "test range holds no usable months");

  ForecastSeries fs;
  fs.months.assign(ds.months().begin() + static_cast<std::ptrdiff_t>(sb),
                   ds.months().begin() + static_cast<std::ptrdiff_t>(se));
  fs.actual.assign(ds.target().begin() + static_cast<std::ptrdiff_t>(sb),
                   ds.target().begin() + static_cast<std::ptrdiff_t>(se));
  fs.forecast.assign(se - sb, 0.0);

  const Eigen::MatrixXd X = ds.features();
  const Eigen::VectorXd y = ds.targets();
  detail::parallel_for(se - sb, n_threads, [&, tb = tb, sb = sb](std::size_t k) {
    const std::size_t i = sb + k;
    const auto rows = static_cast<Eigen::Index>(i - tb);
    const Month m = ds.months()[i];
    try {
      const Eigen::MatrixXd Xt = X.middleRows(static_cast<Eigen::Index>(tb), rows);
      const Eigen::VectorXd yt = y.segment(static_cast<Eigen::Index>(tb), rows);
      const Eigen::VectorXd xq = X.row(static_cast<Eigen::Index>(i)).transpose();
      const double f = forecast_one(Xt, yt, xq, m);
      if (!std::isfinite(f)) throw Error(ErrorCode::diverged_training, "non-finite forecast");
      fs.forecast[k] = f;
    } catch (const Error& e) {
      throw detail::with_month(e, m);
    }
  });
  return fs;
}

/// Expanding-window forecasts of a model spec, refit every month with seed
/// derive_seed(spec.seed, yyyymm).
inline ForecastSeries expanding_window_forecast(const AlignedDataset& ds, const SplitSpec& split,
                                                const ModelSpec& spec, int n_threads = 1) {
  if (spec.kind == ModelKind::nn3)
    throw Error(ErrorCode::invalid_argument, "nn3 is trained once on the training period; use static_forecast");
  spec.validate();
  return expanding_window_forecast(
      ds, split,
      [&spec](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& x, Month m) {
        auto model = fit(spec, X, y, derive_seed(spec.seed, static_cast<std::uint64_t>(m.yyyymm())));
        return model.predict(x);
      },
      n_threads);
}

/// Fit-once driver. `fit_once(X_train, y_train)` returns a callable mapping
/// a feature vector to a forecast; it is applied to every test month.
template <class FitOnce>
  requires std::invocable<FitOnce&, const Eigen::MatrixXd&, const Eigen::VectorXd&>
ForecastSeries static_forecast(const AlignedDataset& ds, const SplitSpec& split, FitOnce&& fit_once) {
  const auto [tb, te] = ds.range_of(split.train_start(), split.train_end());
  const auto [sb, se] = ds.range_of(split.test_start(), split.test_end());
  if (tb == te) throw Error(ErrorCode::empty_partition, "training range holds no usable months");
  if (sb == se) throw Error(ErrorCode::empty_partition, "test range holds no usable months");

  auto predictor = fit_once(ds.features(tb, te), ds.targets(tb, te));
  ForecastSeries fs;
  const Eigen::MatrixXd Xtest = ds.features(sb, se);
  for (std::size_t i = sb; i < se; ++i) {
    const Month m = ds.months()[i];
    const double f = predictor(Eigen::VectorXd(Xtest.row(static_cast<Eigen::Index>(i - sb)).transpose()));
    if (!std::isfinite(f)) throw Error(ErrorCode::diverged_training, "non-finite forecast for " + std::to_string(m.yyyymm()));
    fs.months.push_back(m);
    fs.forecast.push_back(f);
    fs.actual.push_back(ds.target()[i]);
  }
  return fs;
}

inline ForecastSeries static_forecast(const AlignedDataset& ds, const SplitSpec& split, const ModelSpec& spec) {
  spec.validate();
  return static_forecast(ds, split, [&spec](const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    return [model = fit(spec, X, y, spec.seed)](const Eigen::VectorXd& x) { return model.predict(x); };
  });
}

/// Dispatches on the model kind: nn3 is fit once, everything else expands.
inline ForecastSeries forecast(const AlignedDataset& ds, const SplitSpec& split, const ModelSpec& spec,
                               int n_threads = 1) {
  return spec.kind == ModelKind::nn3 ? static_forecast(ds, split, spec)
                                     : expanding_window_forecast(ds, split, spec, n_threads);
}

/// Out-of-sample R^2 against a zero forecast: 1 - SSE / sum(actual^2).
inline double oos_r2(const ForecastSeries& fs) {
  if (fs.size() == 0) throw Error(ErrorCode::too_few_observations, "empty forecast series");
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const double e = fs.actual[i] - fs.forecast[i];
    sse += e * e;
    sst += fs.actual[i] * fs.actual[i];
  }
  if (sst == 0.0) throw Error(ErrorCode::zero_denominator, "all actual returns are zero");
  return 1.0 - sse / sst;
}

inline void write_forecast_csv(std::ostream& os, const ForecastSeries& fs) {
  os << "yyyymm,actual,forecast\n";
  for (std::size_t i = 0; i < fs.size(); ++i)
    os << fs.months[i].yyyymm() << ',' << format_double(fs.actual[i]) << ',' << format_double(fs.forecast[i]) << '\n';
}

}  // namespace factor_timing
