#include <gtest/gtest.h>

#include <mutex>
#include <sstream>

#include "factor_timing/harness.hpp"
#include "synthetic.hpp"

using namespace factor_timing;

namespace {

const AlignedDataset& dataset() {
  static const AlignedDataset ds = ft_test::synthetic_dataset();
  return ds;
}

double mean_model(const Eigen::MatrixXd&, const Eigen::VectorXd& y, const Eigen::VectorXd&, Month) { return y.mean(); }

// Rewrites the CMA column of every factor row dated `from` or later.
std::string perturb_cma_from(const std::string& factors_csv, int from) {
  std::istringstream in(factors_csv);
  std::ostringstream out;
  std::string line;
  std::getline(in, line);
  out << line << '\n';
  while (std::getline(in, line)) {
    if (std::stoi(line.substr(0, 6)) >= from) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
      cells[5] = "9.99";
      line.clear();
      for (std::size_t i = 0; i < cells.size(); ++i) line += (i ? "," : "") + cells[i];
    }
    out << line << '\n';
  }
  return out.str();
}

}  // namespace

TEST(ExpandingWindow, StubMeanMatchesRunningMeanOracle) {
  const auto& ds = dataset();
  const auto fs = expanding_window_forecast(ds, SplitSpec::standard(), mean_model);
  ASSERT_EQ(fs.size(), 240u);
  EXPECT_EQ(fs.months.front(), Month::of(2003, 1));
  EXPECT_EQ(fs.months.back(), Month::of(2022, 12));
  const auto& y = ds.target();
  const std::size_t first_test = ds.size() - 240;
  for (std::size_t k = 0; k < fs.size(); ++k) {
    double s = 0;
    for (std::size_t i = 0; i < first_test + k; ++i) s += y[i];
    EXPECT_NEAR(fs.forecast[k], s / static_cast<double>(first_test + k), 1e-14);
    EXPECT_EQ(fs.actual[k], y[first_test + k]);
  }
}

TEST(ExpandingWindow, TrainingWindowGrowsOneRowPerMonth) {
  const auto& ds = dataset();
  std::mutex mu;
  std::map<int, Eigen::Index> rows;
  std::map<int, Month> last_train_month;
  const auto fs = expanding_window_forecast(
      ds, SplitSpec::standard(),
      [&](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& x, Month m) {
        std::lock_guard lock(mu);
        rows[m.yyyymm()] = X.rows();
        EXPECT_EQ(y.size(), X.rows());
        // The query row is month m and is never part of the training rows.
        const auto idx = ds.index_of(m);
        EXPECT_TRUE(idx.has_value());
        EXPECT_TRUE(x.isApprox(ds.feature_row(*idx)) || x == ds.feature_row(*idx));
        EXPECT_EQ(static_cast<std::size_t>(X.rows()), *idx);
        return 0.0;
      },
      3);
  ASSERT_EQ(rows.size(), 240u);
  Eigen::Index expect = 473;
  for (const auto& [m, n] : rows) EXPECT_EQ(n, expect++) << m;
}

TEST(ExpandingWindow, FutureDataNeverChangesEarlierForecasts) {
  const auto src = ft_test::make_sources();
  const auto base = build_dataset(parse_factor_csv(src.factors_csv), parse_predictor_csv(src.predictors_csv));
  const int cut = 201006;
  const auto changed =
      build_dataset(parse_factor_csv(perturb_cma_from(src.factors_csv, cut)), parse_predictor_csv(src.predictors_csv));
  for (const auto& spec : {ModelSpec::ols_ct(), ModelSpec::ridge(1.0)}) {
    const auto a = expanding_window_forecast(base, SplitSpec::standard(), spec);
    const auto b = expanding_window_forecast(changed, SplitSpec::standard(), spec);
    bool any_later_differs = false;
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (a.months[k].yyyymm() <= cut)
        EXPECT_EQ(a.forecast[k], b.forecast[k]) << a.months[k].yyyymm();
      else
        any_later_differs = any_later_differs || a.forecast[k] != b.forecast[k];
    }
    EXPECT_TRUE(any_later_differs);
  }
}

TEST(ExpandingWindow, ParallelEqualsSequential) {
  const auto& ds = dataset();
  auto rf = ModelSpec::random_forest();
  rf.forest.n_trees = 10;
  for (const auto& spec : {ModelSpec::ols_ct(), ModelSpec::ridge(1.0), rf}) {
    const auto a = expanding_window_forecast(ds, SplitSpec::standard(), spec, 1);
    const auto b = expanding_window_forecast(ds, SplitSpec::standard(), spec, 3);
    EXPECT_EQ(a.forecast, b.forecast);
  }
}

TEST(ExpandingWindow, OlsForecastsRespectFloor) {
  const auto fs = expanding_window_forecast(dataset(), SplitSpec::standard(), ModelSpec::ols_ct());
  for (double f : fs.forecast) EXPECT_GE(f, 0.0);
}

TEST(ExpandingWindow, RejectsNn3) {
  EXPECT_THROW(expanding_window_forecast(dataset(), SplitSpec::standard(), ModelSpec::nn3()), Error);
}

TEST(ExpandingWindow, ErrorsCarryTheMonth) {
  try {
    expanding_window_forecast(dataset(), SplitSpec::standard(),
                              [](const Eigen::MatrixXd&, const Eigen::VectorXd&, const Eigen::VectorXd&, Month m) {
                                if (m == Month::of(2010, 4)) throw Error(ErrorCode::singular_design, "boom");
                                return 0.0;
                              });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::singular_design);
    EXPECT_NE(std::string(e.what()).find("201004"), std::string::npos);
  }
}

TEST(ExpandingWindow, EmptyPartitions) {
  const SplitSpec late(Month::of(1900, 1), Month::of(1900, 12), Month::of(2003, 1), Month::of(2022, 12));
  EXPECT_THROW(expanding_window_forecast(dataset(), late, mean_model), Error);
  const SplitSpec beyond(Month::of(1963, 7), Month::of(2002, 12), Month::of(2030, 1), Month::of(2030, 12));
  EXPECT_THROW(expanding_window_forecast(dataset(), beyond, mean_model), Error);
}

TEST(StaticForecast, StubMeanUsesTrainingPeriodOnly) {
  const auto& ds = dataset();
  const auto fs = static_forecast(ds, SplitSpec::standard(), [](const Eigen::MatrixXd&, const Eigen::VectorXd& y) {
    return [m = y.mean()](const Eigen::VectorXd&) { return m; };
  });
  double s = 0;
  for (std::size_t i = 0; i < 473; ++i) s += ds.target()[i];
  ASSERT_EQ(fs.size(), 240u);
  for (double f : fs.forecast) EXPECT_NEAR(f, s / 473.0, 1e-14);
}

TEST(StaticForecast, Nn3ProducesFiniteForecastsForEveryTestMonth) {
  auto spec = ModelSpec::nn3();
  spec.mlp.epochs = 200;
  const auto fs = forecast(dataset(), SplitSpec::standard(), spec);
  ASSERT_EQ(fs.size(), 240u);
  for (double f : fs.forecast) EXPECT_TRUE(std::isfinite(f));
  const auto again = static_forecast(dataset(), SplitSpec::standard(), spec);
  EXPECT_EQ(fs.forecast, again.forecast);
}

TEST(OosR2, HandComputedCases) {
  ForecastSeries fs;
  fs.months = {Month::of(2003, 1), Month::of(2003, 2)};
  fs.actual = {0.02, 0.04};
  fs.forecast = {0.01, 0.03};
  EXPECT_NEAR(oos_r2(fs), 0.9, 1e-12);
  fs.forecast = {0.0, 0.0};
  EXPECT_EQ(oos_r2(fs), 0.0);
  fs.forecast = fs.actual;
  EXPECT_EQ(oos_r2(fs), 1.0);
  fs.actual = {0.02, -0.01};
  fs.forecast = {0.01, 0.01};
  EXPECT_NEAR(oos_r2(fs), 0.0, 1e-12);
  fs.actual = {2.0, -1.0};
  fs.forecast = {1.0, 0.0};
  EXPECT_NEAR(oos_r2(fs), 0.6, 1e-12);
}

TEST(OosR2, DegenerateInputs) {
  ForecastSeries fs;
  try {
    oos_r2(fs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::too_few_observations);
  }
  fs.months = {Month::of(2003, 1)};
  fs.actual = {0.0};
  fs.forecast = {0.01};
  try {
    oos_r2(fs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::zero_denominator);
  }
}

TEST(ForecastCsv, HeaderAndRows) {
  ForecastSeries fs;
  fs.months = {Month::of(2003, 1)};
  fs.actual = {0.0125};
  fs.forecast = {0.001};
  std::ostringstream os;
  write_forecast_csv(os, fs);
  EXPECT_EQ(os.str(), "yyyymm,actual,forecast\n200301,0.0125,0.001\n");
}
