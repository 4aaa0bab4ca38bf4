#pragma once

// Synthetic stand-ins for the factor and predictor tables, with the same
// layouts and units as the public files. CMA follows an AR(1) with a small
// loading on the lagged term spread, so the models have something to find.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "factor_timing/dataio.hpp"
#include "factor_timing/month.hpp"
#include "factor_timing/rng.hpp"

namespace ft_test {

using factor_timing::Month;

struct SyntheticSources {
  std::string factors_csv;     // percent, header ",Mkt-RF,SMB,HML,RMW,CMA,RF"
  std::string predictors_csv;  // decimal, Goyal-style header
};

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline SyntheticSources make_sources(std::uint64_t seed = 7, Month factor_start = Month::of(1963, 7),
                                     Month end = Month::of(2022, 12), Month predictor_start = Month::of(1950, 1)) {
  factor_timing::Rng rng(seed);
  std::ostringstream pred, fac;
  pred << "yyyymm,Index,D12,E12,b/m,tbl,AAA,BAA,lty,ntis,Rfree,infl,ltr,corpr,svar\n";
  fac << ",Mkt-RF,SMB,HML,RMW,CMA,RF\n";

  double tbl = 0.03, term = 0.01, aaa = 0.05, def = 0.009, cma = 0.0, prev_tms = 0.01;
  for (Month m = predictor_start; m <= end; m = m.next()) {
    tbl = std::max(0.0001, tbl + 0.02 * (0.04 - tbl) + 0.002 * rng.normal());
    term = term + 0.05 * (0.015 - term) + 0.002 * rng.normal();
    aaa = std::max(0.01, aaa + 0.02 * (0.06 - aaa) + 0.0015 * rng.normal());
    def = std::max(0.002, def + 0.05 * (0.01 - def) + 0.0008 * rng.normal());
    const double lty = tbl + term;
    const double baa = aaa + def;
    const double corpr = 0.005 + 0.02 * rng.normal();
    pred << m.yyyymm() << ",\"1,234.5\",1.1,2.2,0.5," << fmt("%.4f", tbl) << ',' << fmt("%.4f", aaa) << ','
         << fmt("%.4f", baa) << ',' << fmt("%.4f", lty) << ",0.01,0.003,0.002,0.004," << fmt("%.4f", corpr)
         << ",0.001\n";

    if (m >= factor_start) {
      cma = 0.0012 + 0.12 * cma + 0.08 * prev_tms + 0.019 * rng.normal();
      const double mkt = 0.006 + 0.045 * rng.normal();
      fac << m.yyyymm() << ',' << fmt("%.2f", 100 * mkt) << ',' << fmt("%.2f", 100 * 0.03 * rng.normal()) << ','
          << fmt("%.2f", 100 * 0.03 * rng.normal()) << ',' << fmt("%.2f", 100 * 0.02 * rng.normal()) << ','
          << fmt("%.2f", 100 * cma) << ',' << fmt("%.2f", 100 * tbl / 12) << '\n';
      // Keep the recursion consistent with what is written out.
      cma = std::round(cma * 1e4) / 1e4;
    }
    prev_tms = std::round(lty * 1e4) / 1e4 - std::round(tbl * 1e4) / 1e4;
  }
  return {fac.str(), pred.str()};
}

/// Writes the synthetic sources plus a config pointing at them.
inline std::filesystem::path write_synthetic_workspace(const std::filesystem::path& dir, std::uint64_t seed = 7,
                                                       const std::string& extra_config = "") {
  std::filesystem::create_directories(dir);
  const auto src = make_sources(seed);
  std::ofstream(dir / "factors.csv") << src.factors_csv;
  std::ofstream(dir / "predictors.csv") << src.predictors_csv;
  const auto cfg = dir / "config.json";
  std::ofstream(cfg) << "{\n  \"data\": {\"factors\": \"factors.csv\", \"predictors\": \"predictors.csv\"}"
                     << extra_config << "\n}\n";
  return cfg;
}

inline factor_timing::AlignedDataset synthetic_dataset(std::uint64_t seed = 7) {
  const auto src = make_sources(seed);
  return factor_timing::build_dataset(factor_timing::parse_factor_csv(src.factors_csv),
                                      factor_timing::parse_predictor_csv(src.predictors_csv));
}

/// Per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("factor_timing_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace ft_test
