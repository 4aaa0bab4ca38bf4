#pragma once

/**
 * @file pipeline.hpp
 * @brief End-to-end driver: ingest -> forecast -> weights -> backtests, and
 *        the artifact writers / readers behind the command-line tool.
 *
 * Artifacts written by `run_pipeline` into the output directory:
 *
 *   config.json                 resolved config (seeds included)
 *   aligned.csv                 merged panel
 *   forecast_<model>.csv        yyyymm,actual,forecast
 *   weights_<model>.csv         yyyymm,weight,variance_used
 *   backtest_<strategy>_<cost>.csv   monthly-rebalanced test-period run
 *   holdout_<strategy>_<cost>.csv    yyyymm,monthly_wealth,selected_wealth
 *   oos_r2.csv, sharpe_table.csv, intervals.csv, summary.json
 *
 * `<strategy>` is a model name or "constant" (the unconditional benchmark).
 */

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "factor_timing/backtest.hpp"
#include "factor_timing/config.hpp"
#include "factor_timing/dataio.hpp"
#include "factor_timing/harness.hpp"
#include "factor_timing/model.hpp"
#include "factor_timing/timing.hpp"

namespace factor_timing {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_failure, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::io_failure, "write failed for " + path.string());
}

template <class Writer>
void write_with(const std::filesystem::path& path, Writer&& w) {
  std::ostringstream ss;
  w(ss);
  write_file(path, ss.str());
}

/// Parses one input file, prefixing any data error with its path.
template <class Parser>
MonthlyPanel load_panel(const std::filesystem::path& path, Unit unit, Parser&& parse) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::io_failure, "input file not found: " + path.string());
  const auto text = read_file(path);
  try {
    return parse(text, unit);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

inline AlignedDataset load_dataset(const RunConfig& cfg) {
  const auto factors = load_panel(cfg.factors_path, cfg.factors_unit,
                                  [](std::string_view t, Unit u) { return parse_factor_csv(t, u); });
  const auto predictors = load_panel(cfg.predictors_path, cfg.predictors_unit,
                                     [](std::string_view t, Unit u) { return parse_predictor_csv(t, u); });
  return build_dataset(factors, predictors, cfg.features, cfg.target);
}

struct IngestSummary {
  std::size_t merged_months = 0;
  Month merged_first, merged_last;
  std::size_t usable_months = 0;
  Month first_usable, last_usable;
  std::size_t train_months = 0;
  std::size_t test_months = 0;
};

inline IngestSummary summarize(const AlignedDataset& ds, const SplitSpec& split) {
  IngestSummary s;
  s.merged_months = ds.merged_count();
  s.merged_first = ds.merged_first();
  s.merged_last = ds.merged_last();
  s.usable_months = ds.size();
  s.first_usable = ds.first_usable_month();
  s.last_usable = ds.last_month();
  auto [tb, te] = ds.range_of(split.train_start(), split.train_end());
  auto [sb, se] = ds.range_of(split.test_start(), split.test_end());
  s.train_months = te - tb;
  s.test_months = se - sb;
  return s;
}

inline void print_summary(std::ostream& os, const IngestSummary& s) {
  os << "merged months:  " << s.merged_months << " (" << s.merged_first.iso() << ".." << s.merged_last.iso() << ")\n"
     << "usable months:  " << s.usable_months << " (" << s.first_usable.iso() << ".." << s.last_usable.iso()
     << ", first month with all lags defined: " << s.first_usable.iso() << ")\n"
     << "train months:   " << s.train_months << "\n"
     << "test months:    " << s.test_months << "\n";
}

struct StrategyResult {
  std::string name;
  std::string label;
  std::optional<double> oos_r2;  // absent for the benchmark
  WeightSeries weights;
};

namespace detail {

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

}  // namespace detail

/// Runs the full evaluation and writes every artifact into `out_dir`. On
/// failure an `INCOMPLETE` marker naming the error is left in `out_dir`.
inline Json run_pipeline(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(out_dir);
  const auto marker = out_dir / "INCOMPLETE";
  write_file(marker, "run in progress\n");
  try {
    const auto digest = config_digest(cfg);
    auto echo = to_json(cfg);
    echo.erase("output_dir");
    write_file(out_dir / "config.json", echo.dump(2) + "\n");

    const auto ds = load_dataset(cfg);
    write_with(out_dir / "aligned.csv", [&](std::ostream& os) { write_aligned_csv(os, ds); });
    const auto ingest = summarize(ds, cfg.split);
    const auto [train, test] = split(ds, cfg.split);
    const auto realized = realized_returns(ds);
    const ReturnSeries test_returns{test.months(), test.target()};

    Json summary;
    summary["config_digest"] = digest;
    summary["data"] = {{"merged_months", ingest.merged_months},
                       {"merged_first", ingest.merged_first.yyyymm()},
                       {"merged_last", ingest.merged_last.yyyymm()},
                       {"usable_months", ingest.usable_months},
                       {"first_usable_month", ingest.first_usable.yyyymm()},
                       {"train_months", ingest.train_months},
                       {"test_months", ingest.test_months}};

    // In-sample OLS inference without restrictions.
    {
      const auto Xtr = train.features();
      const auto ytr = train.targets();
      const auto ols = fit_ols(Xtr, ytr, false);
      const auto inf = ols_inference(ols, Xtr, ytr);
      Json rows = Json::array();
      for (Eigen::Index i = 0; i < inf.coefficients.size(); ++i) {
        const std::string term = i == 0 ? "intercept" : ds.feature_names()[static_cast<std::size_t>(i - 1)];
        Json r = {{"term", term},
                  {"coefficient", inf.coefficients(i)},
                  {"std_error", inf.standard_errors(i)},
                  {"t_statistic", inf.t_statistics(i)},
                  {"p_value", inf.p_values(i)}};
        r["vif"] = i == 0 ? Json(nullptr) : detail::number_or_null(inf.vif(i - 1));
        rows.push_back(r);
      }
      summary["ols_inference"] = {{"n_obs", inf.n_obs}, {"r_squared", inf.r_squared}, {"terms", rows}};
    }

    std::vector<StrategyResult> strategies;
    std::ostringstream r2csv;
    r2csv << "model,label,oos_r2\n";
    Json r2json = Json::array();
    for (const auto& m : cfg.models) {
      if (log) *log << "forecasting " << m.name << "...\n";
      const auto fs = forecast(ds, cfg.split, m.spec, cfg.threads);
      const double r2 = oos_r2(fs);
      write_with(out_dir / ("forecast_" + m.name + ".csv"), [&](std::ostream& os) { write_forecast_csv(os, fs); });
      auto ws = timed_weights(fs, realized, cfg.timing);
      write_with(out_dir / ("weights_" + m.name + ".csv"), [&](std::ostream& os) { write_weights_csv(os, ws); });
      const std::string label(display_label(m.spec.kind));
      r2csv << m.name << ",\"" << label << "\"," << format_double(r2) << '\n';
      r2json.push_back({{"model", m.name}, {"label", label}, {"oos_r2", r2}});
      strategies.push_back({m.name, label, r2, std::move(ws)});
    }
    write_file(out_dir / "oos_r2.csv", r2csv.str());
    summary["oos_r2"] = r2json;

    {
      const auto& y = train.target();
      strategies.push_back({"constant", "Constant (unconditional optimal)", std::nullopt,
                            constant_weights(test.months(), y, cfg.timing)});
      write_with(out_dir / "weights_constant.csv",
                 [&](std::ostream& os) { write_weights_csv(os, strategies.back().weights); });
    }

    BacktestOptions opt;
    opt.initial_wealth = cfg.initial_wealth;
    opt.charge_entry = cfg.charge_entry;

    std::ostringstream sharpe_csv, interval_csv;
    sharpe_csv << "strategy,cost,period,n_months,sharpe,terminal_wealth,max_drawdown,bankrupt\n";
    interval_csv << "strategy,cost,interval,validation_months,holdout_months,holdout_wealth_monthly,"
                    "holdout_wealth_selected,annualized_extra_return\n";
    Json sharpe_json = Json::array();
    Json interval_json = Json::array();
    for (const auto& s : strategies) {
      for (const auto& cost : cfg.costs) {
        const auto tag = cost.tag();
        const auto rep = run_backtest(s.weights, test_returns, cost, 1, opt);
        write_with(out_dir / ("backtest_" + s.name + "_" + tag + ".csv"),
                   [&](std::ostream& os) { write_backtest_csv(os, rep); });
        Json periods = Json::object();
        for (const auto& pm : subperiod_metrics(rep, cfg.periods)) {
          sharpe_csv << s.name << ',' << tag << ',' << pm.label << ',' << pm.n_months << ','
                     << detail::csv_number(pm.sharpe) << ',' << format_double(pm.terminal_wealth) << ','
                     << format_double(pm.max_drawdown) << ',' << (rep.bankrupt ? 1 : 0) << '\n';
          periods[pm.label] = {{"sharpe", detail::number_or_null(pm.sharpe)},
                               {"terminal_wealth", pm.terminal_wealth},
                               {"max_drawdown", pm.max_drawdown}};
        }
        sharpe_json.push_back({{"strategy", s.name},
                               {"label", s.label},
                               {"cost", tag},
                               {"bankrupt", rep.bankrupt},
                               {"periods", periods}});

        if (cost.kind == CostKind::none) continue;
        const auto sel =
            select_rebalance_interval(s.weights, test_returns, cost, cfg.rebalance_grid, cfg.validation_fraction, opt);
        write_with(out_dir / ("holdout_" + s.name + "_" + tag + ".csv"), [&](std::ostream& os) {
          os << "yyyymm,monthly_wealth,selected_wealth\n";
          const auto n = std::max(sel.holdout.size(), sel.holdout_monthly.size());
          for (std::size_t i = 0; i < n; ++i) {
            const auto& longer = sel.holdout.size() >= sel.holdout_monthly.size() ? sel.holdout : sel.holdout_monthly;
            os << longer.months[i].yyyymm() << ','
               << (i < sel.holdout_monthly.size() ? format_double(sel.holdout_monthly.wealth[i]) : "") << ','
               << (i < sel.holdout.size() ? format_double(sel.holdout.wealth[i]) : "") << '\n';
          }
        });
        const double extra = sel.annualized_extra_return();
        interval_csv << s.name << ',' << tag << ',' << sel.interval << ',' << sel.validation_months << ','
                     << sel.holdout.size() << ',' << format_double(sel.holdout_monthly.terminal_wealth()) << ','
                     << format_double(sel.holdout.terminal_wealth()) << ',' << detail::csv_number(extra) << '\n';
        Json table = Json::array();
        for (const auto& sc : sel.table) table.push_back({{"interval", sc.interval}, {"validation_wealth", sc.validation_wealth}});
        interval_json.push_back({{"strategy", s.name},
                                 {"cost", tag},
                                 {"interval", sel.interval},
                                 {"validation_months", sel.validation_months},
                                 {"holdout_wealth_monthly", sel.holdout_monthly.terminal_wealth()},
                                 {"holdout_wealth_selected", sel.holdout.terminal_wealth()},
                                 {"annualized_extra_return", detail::number_or_null(extra)},
                                 {"validation_table", table}});
      }
    }
    write_file(out_dir / "sharpe_table.csv", sharpe_csv.str());
    write_file(out_dir / "intervals.csv", interval_csv.str());
    summary["sharpe"] = sharpe_json;
    summary["intervals"] = interval_json;
    write_file(out_dir / "summary.json", summary.dump(2) + "\n");
    fs::remove(marker);
    return summary;
  } catch (const std::exception& e) {
    write_file(marker, std::string("run failed: ") + e.what() + "\n");
    throw;
  }
}

// ---------------------------------------------------------------------------
// report

namespace detail {

/// Minimal reader for the CSV artifacts written above.
inline std::vector<std::map<std::string, std::string>> read_records(const std::filesystem::path& path) {
  const auto text = read_file(path);
  std::vector<std::map<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (header.empty()) {
      header = std::move(cells);
      continue;
    }
    std::map<std::string, std::string> rec;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) rec[header[i]] = cells[i];
    out.push_back(std::move(rec));
  }
  return out;
}

inline void print_table(std::ostream& os, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], r[i].size());
    }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i == 0) os << std::left << std::setw(static_cast<int>(width[i])) << r[i];
      else os << "  " << std::right << std::setw(static_cast<int>(width[i])) << r[i];
    }
    os << '\n';
    if (k == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total - 2, '-') << '\n';
    }
  }
}

inline std::string fixed(const std::string& v, int digits) {
  if (v.empty()) return "n/a";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << std::stod(v);
  return ss.str();
}

}  // namespace detail

/// Prints R^2, Sharpe-by-period and interval tables from a run directory.
inline void print_report(const std::filesystem::path& dir, std::ostream& os) {
  namespace fs = std::filesystem;
  for (const auto* f : {"oos_r2.csv", "sharpe_table.csv"})
    if (!fs::exists(dir / f)) throw Error(ErrorCode::missing_artifacts, (dir / f).string() + " not found");
  if (fs::exists(dir / "INCOMPLETE"))
    os << "warning: " << (dir / "INCOMPLETE").string() << " present; outputs may be partial\n\n";

  const auto r2 = detail::read_records(dir / "oos_r2.csv");
  os << "Out-of-sample R^2 (zero-mean benchmark)\n";
  std::vector<std::vector<std::string>> t{{"model", "oos_r2"}};
  for (const auto& r : r2) t.push_back({r.at("label"), detail::fixed(r.at("oos_r2"), 6)});
  detail::print_table(os, t);

  const auto sh = detail::read_records(dir / "sharpe_table.csv");
  std::vector<std::string> costs, strategies, periods;
  auto remember = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  std::map<std::string, std::string> cell;
  for (const auto& r : sh) {
    remember(costs, r.at("cost"));
    remember(strategies, r.at("strategy"));
    remember(periods, r.at("period"));
    cell[r.at("strategy") + "|" + r.at("cost") + "|" + r.at("period")] = r.at("sharpe");
  }
  for (const auto& c : costs) {
    os << "\nAnnualized Sharpe ratio by horizon (cost: " << c << ")\n";
    std::vector<std::vector<std::string>> tt;
    std::vector<std::string> head{"strategy"};
    head.insert(head.end(), periods.begin(), periods.end());
    tt.push_back(head);
    for (const auto& s : strategies) {
      std::vector<std::string> row{s};
      for (const auto& p : periods) {
        auto it = cell.find(s + "|" + c + "|" + p);
        row.push_back(it == cell.end() ? "" : detail::fixed(it->second, 4));
      }
      tt.push_back(row);
    }
    detail::print_table(os, tt);
  }

  if (fs::exists(dir / "intervals.csv")) {
    const auto iv = detail::read_records(dir / "intervals.csv");
    if (!iv.empty()) {
      std::vector<std::string> icosts, istrats;
      std::map<std::string, std::string> icell;
      for (const auto& r : iv) {
        remember(icosts, r.at("cost"));
        remember(istrats, r.at("strategy"));
        icell[r.at("strategy") + "|" + r.at("cost")] = r.at("interval");
      }
      os << "\nRebalancing interval selected on the validation prefix (months)\n";
      std::vector<std::vector<std::string>> tt;
      std::vector<std::string> head{"strategy"};
      head.insert(head.end(), icosts.begin(), icosts.end());
      tt.push_back(head);
      for (const auto& s : istrats) {
        std::vector<std::string> row{s};
        for (const auto& c : icosts) row.push_back(icell.count(s + "|" + c) ? icell[s + "|" + c] : "");
        tt.push_back(row);
      }
      detail::print_table(os, tt);
    }
  }
}

}  // namespace factor_timing
