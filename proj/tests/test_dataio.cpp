#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "factor_timing/dataio.hpp"
#include "synthetic.hpp"

using namespace factor_timing;

namespace {

const char* kFactorHeader = ",Mkt-RF,SMB,HML,RMW,CMA,RF\n";

std::string factor_row(int yyyymm, const std::string& cma = "0.40") {
  return std::to_string(yyyymm) + ",1.00,0.10,0.20,0.30," + cma + ",0.05\n";
}

std::string predictor_text(const std::vector<int>& months) {
  std::string s = "yyyymm,tbl,lty,AAA,BAA,corpr,extra\n";
  for (int m : months) s += std::to_string(m) + ",0.03,0.05,0.06,0.07,0.01,1\n";
  return s;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::invalid_argument;
}

}  // namespace

TEST(Month, CarriesAcrossYearBoundary) {
  EXPECT_EQ(Month::from_yyyymm(199912).next().yyyymm(), 200001);
  EXPECT_EQ(Month::from_yyyymm(200001).prev().yyyymm(), 199912);
  EXPECT_EQ(Month::of(2022, 12).months_since(Month::of(1963, 7)), 713);
  EXPECT_FALSE(Month::try_from_yyyymm(196313));
  EXPECT_FALSE(Month::try_from_yyyymm(196300));
}

TEST(ParseFactorCsv, TwoRowsGiveTwoMonths) {
  auto p = parse_factor_csv(std::string(kFactorHeader) + factor_row(196307) + factor_row(196308));
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p.months[0].yyyymm(), 196307);
  EXPECT_EQ(p.months[1].yyyymm(), 196308);
  EXPECT_TRUE(p.has("mkt_rf"));
  EXPECT_TRUE(p.has("cma"));
}

TEST(ParseFactorCsv, PercentIsStoredAsDecimal) {
  auto p = parse_factor_csv(std::string(kFactorHeader) + factor_row(196307, "1.00"), Unit::percent);
  EXPECT_EQ(p.column("cma")[0], 0.01);
}

TEST(ParseFactorCsv, DuplicateMonthRejected) {
  EXPECT_EQ(code_of([] { parse_factor_csv(std::string(kFactorHeader) + factor_row(196307) + factor_row(196307)); }),
            ErrorCode::duplicate_month);
}

TEST(ParseFactorCsv, MalformedRowsRejected) {
  EXPECT_EQ(code_of([] { parse_factor_csv(std::string(kFactorHeader) + factor_row(196307, "abc")); }),
            ErrorCode::malformed_row);
  EXPECT_EQ(code_of([] { parse_factor_csv(std::string(kFactorHeader) + factor_row(196313)); }),
            ErrorCode::malformed_row);
  EXPECT_EQ(code_of([] { parse_factor_csv(std::string(kFactorHeader) + "196307,1,2\n"); }), ErrorCode::malformed_row);
  EXPECT_EQ(code_of([] { parse_factor_csv(kFactorHeader); }), ErrorCode::empty_input);
  EXPECT_EQ(code_of([] { parse_factor_csv(""); }), ErrorCode::empty_input);
}

TEST(ParseFactorCsv, ErrorsCarryLineNumbers) {
  try {
    parse_factor_csv(std::string(kFactorHeader) + factor_row(196307) + factor_row(196308, "x"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(ParseFactorCsv, SentinelBecomesMissing) {
  auto p = parse_factor_csv(std::string(kFactorHeader) + factor_row(196307, "-99.99"));
  EXPECT_TRUE(is_missing(p.column("cma")[0]));
}

TEST(ParseFactorCsv, PercentEqualsDecimalOverHundred) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::string text = kFactorHeader;
  for (int i = 0; i < 50; ++i) {
    char cell[32];
    std::snprintf(cell, sizeof cell, "%.4f", u(gen));
    text += factor_row(Month::of(1970, 1).plus(i).yyyymm(), cell);
  }
  const auto pct = parse_factor_csv(text, Unit::percent);
  const auto dec = parse_factor_csv(text, Unit::decimal);
  for (const auto& [name, col] : pct.columns)
    for (std::size_t i = 0; i < col.size(); ++i) EXPECT_EQ(col[i], dec.column(name)[i] / 100.0);
}

TEST(ParsePredictorCsv, MinimalFile) {
  auto p = parse_predictor_csv(predictor_text({196301, 196302, 196303}));
  EXPECT_EQ(p.size(), 3u);
  EXPECT_TRUE(p.has("extra"));
  EXPECT_DOUBLE_EQ(p.column("baa")[1], 0.07);
}

TEST(ParsePredictorCsv, MissingRequiredColumn) {
  EXPECT_EQ(code_of([] { parse_predictor_csv("yyyymm,tbl,AAA,BAA,corpr\n196301,0.03,0.06,0.07,0.01\n"); }),
            ErrorCode::missing_column);
}

TEST(ParsePredictorCsv, BlankOptionalCellIsMissing) {
  auto p = parse_predictor_csv("yyyymm,tbl,lty,AAA,BAA,corpr,extra\n196301,0.03,0.05,0.06,0.07,0.01,\n");
  EXPECT_TRUE(is_missing(p.column("extra")[0]));
}

TEST(ParsePredictorCsv, QuotedThousandsSeparator) {
  auto p = parse_predictor_csv("yyyymm,Index,tbl,lty,AAA,BAA,corpr\n196301,\"1,234.5\",0.03,0.05,0.06,0.07,0.01\n");
  EXPECT_DOUBLE_EQ(p.column("index")[0], 1234.5);
}

TEST(BuildDataset, TermSpreadAndLags) {
  std::string fac = kFactorHeader;
  fac += factor_row(196307, "0.40") + factor_row(196308, "0.10") + factor_row(196309, "0.20");
  auto ds = build_dataset(parse_factor_csv(fac), parse_predictor_csv(predictor_text({196306, 196307, 196308, 196309})));
  // 196307 lacks a lagged CMA, so the first usable month is 196308.
  EXPECT_EQ(ds.first_usable_month().yyyymm(), 196308);
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.merged_count(), 3u);
  EXPECT_DOUBLE_EQ(ds.panel().column("tms")[0], 0.05 - 0.03);
  EXPECT_DOUBLE_EQ(ds.panel().column("dfy")[0], 0.07 - 0.06);
  EXPECT_EQ(ds.panel().column("cma_lag1")[0], 0.004);
  EXPECT_EQ(ds.panel().column("cma")[0], 0.001);
  EXPECT_EQ(ds.feature_names(), default_features());
}

TEST(BuildDataset, ErrorCases) {
  std::string fac = std::string(kFactorHeader) + factor_row(196307) + factor_row(196308);
  EXPECT_EQ(code_of([&] { build_dataset(parse_factor_csv(fac), parse_predictor_csv(predictor_text({190001, 190002}))); }),
            ErrorCode::no_overlap);
  EXPECT_EQ(code_of([&] { build_dataset(parse_factor_csv(fac), parse_predictor_csv(predictor_text({196307, 196308}))); }),
            ErrorCode::insufficient_rows);
  EXPECT_EQ(code_of([&] {
              build_dataset(parse_factor_csv(fac), parse_predictor_csv(predictor_text({196306, 196307, 196308})),
                            {"tms"});
            }),
            ErrorCode::invalid_argument);
}

TEST(BuildDataset, MissingMonthInsideRangeIsReported) {
  std::string fac = kFactorHeader;
  for (int m : {196307, 196308, 196309, 196310, 196311}) fac += factor_row(m, m == 196309 ? "-99.99" : "0.1");
  auto pred = parse_predictor_csv(predictor_text({196306, 196307, 196308, 196309, 196310, 196311}));
  EXPECT_EQ(code_of([&] { build_dataset(parse_factor_csv(fac), pred); }), ErrorCode::misalignment);
}

TEST(BuildDataset, FullSyntheticVintage) {
  const auto ds = ft_test::synthetic_dataset();
  EXPECT_EQ(ds.merged_count(), 714u);
  EXPECT_EQ(ds.merged_first().yyyymm(), 196307);
  EXPECT_EQ(ds.merged_last().yyyymm(), 202212);
  EXPECT_EQ(ds.size(), 713u);
  EXPECT_EQ(ds.first_usable_month().yyyymm(), 196308);
  auto [train, test] = split(ds, SplitSpec::standard());
  EXPECT_EQ(test.size(), 240u);
  EXPECT_EQ(train.size(), 473u);
  EXPECT_EQ(train.months().back().yyyymm(), 200212);
  EXPECT_EQ(test.months().front().yyyymm(), 200301);
}

TEST(BuildDataset, RowOrderDoesNotMatter) {
  const auto src = ft_test::make_sources(11, Month::of(1990, 1), Month::of(1995, 12), Month::of(1989, 1));
  auto shuffle_rows = [](const std::string& text, unsigned seed) {
    std::istringstream in(text);
    std::string header, line;
    std::getline(in, header);
    std::vector<std::string> rows;
    while (std::getline(in, line)) rows.push_back(line);
    std::shuffle(rows.begin(), rows.end(), std::mt19937(seed));
    std::string out = header + "\n";
    for (auto& r : rows) out += r + "\n";
    return out;
  };
  const auto a = build_dataset(parse_factor_csv(src.factors_csv), parse_predictor_csv(src.predictors_csv));
  const auto b = build_dataset(parse_factor_csv(shuffle_rows(src.factors_csv, 1)),
                               parse_predictor_csv(shuffle_rows(src.predictors_csv, 2)));
  EXPECT_EQ(a.months(), b.months());
  ASSERT_EQ(a.panel().columns.size(), b.panel().columns.size());
  for (const auto& [name, col] : a.panel().columns) {
    const auto& other = b.panel().column(name);
    for (std::size_t i = 0; i < col.size(); ++i)
      EXPECT_TRUE(col[i] == other[i] || (is_missing(col[i]) && is_missing(other[i]))) << name;
  }
}

TEST(BuildDataset, FeaturesAtMonthIgnoreSameMonthSources) {
  const auto fac = parse_factor_csv(ft_test::make_sources(5).factors_csv);
  const auto pred = parse_predictor_csv(ft_test::make_sources(5).predictors_csv);
  const auto base = build_dataset(fac, pred);
  for (int cut : {196912, 198506, 200301, 201007}) {
    const Month t = Month::from_yyyymm(cut);
    auto f2 = fac;
    auto p2 = pred;
    const auto fi = *f2.index_of(t);
    const auto pi = *p2.index_of(t);
    for (auto& [_, col] : f2.columns) col[fi] += 0.5;
    for (auto& [_, col] : p2.columns) col[pi] += 0.5;
    const auto pert = build_dataset(f2, p2);
    const auto i = *base.index_of(t);
    for (const auto& f : base.feature_names()) EXPECT_EQ(base.panel().column(f)[i], pert.panel().column(f)[i]) << f;
    // The month after does see the change.
    EXPECT_NE(base.panel().column("cma_lag1")[i + 1], pert.panel().column("cma_lag1")[i + 1]);
  }
}

TEST(Split, ValidatesAndPartitions) {
  EXPECT_THROW(SplitSpec(Month::of(1963, 7), Month::of(2002, 12), Month::of(2002, 12), Month::of(2022, 12)), Error);
  const auto ds = ft_test::synthetic_dataset();
  auto [train, test] = split(ds, SplitSpec::standard());
  std::vector<Month> joined = train.months();
  joined.insert(joined.end(), test.months().begin(), test.months().end());
  EXPECT_EQ(joined, ds.months());
  EXPECT_EQ(train.feature_names(), ds.feature_names());
  EXPECT_EQ(code_of([&] {
              split(ds, SplitSpec(Month::of(1900, 1), Month::of(1901, 1), Month::of(2003, 1), Month::of(2022, 12)));
            }),
            ErrorCode::empty_partition);
}

TEST(WriteAlignedCsv, HeaderAndUnits) {
  const auto ds = ft_test::synthetic_dataset();
  std::ostringstream os;
  write_aligned_csv(os, ds);
  const auto text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "yyyymm,cma,mkt_rf,tms,dfy,corpr,tms_lag1,dfy_lag1,cma_lag1");
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), ds.size() + 1);
  const auto second = text.substr(text.find('\n') + 1);
  EXPECT_EQ(second.substr(0, 7), "196308,");
  const auto cma_cell = second.substr(7, second.find(',', 7) - 7);
  EXPECT_EQ(std::stod(cma_cell), ds.panel().column("cma")[0]);
}
