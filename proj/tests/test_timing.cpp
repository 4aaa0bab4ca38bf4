#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "factor_timing/timing.hpp"

using namespace factor_timing;

namespace {

ReturnSeries series(Month start, std::vector<double> values) {
  ReturnSeries r;
  for (std::size_t i = 0; i < values.size(); ++i) r.months.push_back(start.plus(static_cast<int>(i)));
  r.values = std::move(values);
  return r;
}

}  // namespace

TEST(ExpandingVariance, TwoPointSampleVariance) {
  const auto r = series(Month::of(2000, 1), {0.01, 0.03, 0.50});
  EXPECT_NEAR(expanding_variance(r, Month::of(2000, 2)), 0.0002, 1e-15);
}

TEST(ExpandingVariance, MatchesDirectComputationForEveryCutoff) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> z(0.003, 0.02);
  std::vector<double> v(60);
  for (auto& x : v) x = z(gen);
  const auto r = series(Month::of(1990, 1), v);
  for (std::size_t n = 2; n <= v.size(); ++n) {
    double m = 0;
    for (std::size_t i = 0; i < n; ++i) m += v[i] / static_cast<double>(n);
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += (v[i] - m) * (v[i] - m);
    EXPECT_NEAR(expanding_variance(r, r.months[n - 1]), s / static_cast<double>(n - 1), 1e-15);
  }
}

TEST(ExpandingVariance, Errors) {
  const auto flat = series(Month::of(2000, 1), {0.01, 0.01, 0.01});
  try {
    expanding_variance(flat, Month::of(2000, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::zero_variance);
  }
  try {
    expanding_variance(flat, Month::of(2000, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::too_few_observations);
  }
}

TEST(OptimalWeight, WorkedExamples) {
  const TimingConfig cfg;
  EXPECT_NEAR(optimal_weight(0.01, 0.0025, cfg), 2.0, 1e-12);
  EXPECT_NEAR(optimal_weight(0.003, 0.0004, cfg), 3.75, 1e-12);
  EXPECT_EQ(optimal_weight(0.0, 0.0004, cfg), 0.0);
}

TEST(OptimalWeight, HomogeneityAndSign) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> f(-0.05, 0.05), v(1e-5, 1e-2), c(0.1, 10.0), g(0.5, 10.0);
  for (int i = 0; i < 1000; ++i) {
    TimingConfig cfg;
    cfg.gamma = g(gen);
    const double fc = f(gen), var = v(gen), k = c(gen);
    const double w = optimal_weight(fc, var, cfg);
    EXPECT_NEAR(optimal_weight(k * fc, var, cfg), k * w, 1e-9 * std::max(1.0, std::fabs(k * w)));
    EXPECT_NEAR(optimal_weight(fc, k * var, cfg), w / k, 1e-9 * std::max(1.0, std::fabs(w / k)));
    EXPECT_EQ(std::signbit(w), std::signbit(fc));
  }
}

TEST(OptimalWeight, CapAndInvalidVariance) {
  TimingConfig cfg;
  cfg.weight_cap = 1.5;
  EXPECT_EQ(optimal_weight(0.01, 0.0025, cfg), 1.5);
  EXPECT_EQ(optimal_weight(-0.01, 0.0025, cfg), -1.5);
  EXPECT_NEAR(optimal_weight(0.001, 0.0025, cfg), 0.2, 1e-12);
  try {
    optimal_weight(0.01, 0.0, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::nonpositive_variance);
  }
  TimingConfig bad;
  bad.gamma = 0.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(TimedWeights, VarianceUsesReturnsThroughPreviousMonth) {
  const auto realized = series(Month::of(2000, 1), {0.01, 0.03, -0.02, 0.04, 0.10});
  ForecastSeries fs;
  fs.months = {Month::of(2000, 3), Month::of(2000, 4), Month::of(2000, 5)};
  fs.forecast = {0.001, 0.002, -0.003};
  fs.actual = {-0.02, 0.04, 0.10};
  const auto ws = timed_weights(fs, realized, TimingConfig{});
  ASSERT_EQ(ws.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const double v = expanding_variance(realized, fs.months[i].prev());
    EXPECT_EQ(ws.variance_used[i], v);
    EXPECT_EQ(ws.weight[i], fs.forecast[i] / (2.0 * v));
  }
  EXPECT_NEAR(ws.variance_used[0], 0.0002, 1e-15);

  // Changing the realized return of month t leaves the weight at t unchanged.
  auto shocked = realized;
  shocked.values[4] = -0.9;
  EXPECT_EQ(timed_weights(fs, shocked, TimingConfig{}).weight, ws.weight);
}

TEST(ConstantWeights, MeanOverGammaVariance) {
  const std::vector<double> train{0.01, 0.03, 0.02, -0.01};
  const double m = 0.0125;
  double s = 0;
  for (double x : train) s += (x - m) * (x - m);
  const double var = s / 3.0;
  const std::vector<Month> months{Month::of(2003, 1), Month::of(2003, 2)};
  const auto ws = constant_weights(months, train, TimingConfig{});
  ASSERT_EQ(ws.size(), 2u);
  EXPECT_NEAR(ws.weight[0], m / (2.0 * var), 1e-12);
  EXPECT_EQ(ws.weight[0], ws.weight[1]);
}

TEST(WeightsCsv, Format) {
  WeightSeries ws{{Month::of(2003, 1)}, {2.0}, {0.0025}};
  std::ostringstream os;
  write_weights_csv(os, ws);
  EXPECT_EQ(os.str(), "yyyymm,weight,variance_used\n200301,2,0.0025\n");
}
