#pragma once

/**
 * @file backtest.hpp
 * @brief Wealth-path simulation of a factor weight series under transaction
 *        costs, with Sharpe / drawdown analytics and validation-based
 *        selection of the rebalancing interval.
 *
 * Conventions:
 *  - The held weight is reset to the target at months 0, k, 2k, ... and is
 *    constant in between (no drift).
 *  - At a rebalance the dollar trade is W_{t-1} * |w_new - w_old|, starting
 *    from w_old = 0 at month 0. Proportional cost = rate * trade, quadratic
 *    cost = rate * trade^2.
 *  - net_t = w_held * r_t - cost_t / W_{t-1}  (+ rf_t when a risk-free leg
 *    is supplied), and W_t = W_{t-1} * (1 + net_t).
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "factor_timing/error.hpp"
#include "factor_timing/month.hpp"
#include "factor_timing/stats.hpp"
#include "factor_timing/timing.hpp"

namespace factor_timing {

enum class CostKind { none, proportional, quadratic };

constexpr std::string_view to_string(CostKind k) noexcept {
  switch (k) {
    case CostKind::none: return "none";
    case CostKind::proportional: return "proportional";
    case CostKind::quadratic: return "quadratic";
  }
  return "unknown";
}

inline CostKind parse_cost_kind(std::string_view s) {
  if (s == "none") return CostKind::none;
  if (s == "proportional") return CostKind::proportional;
  if (s == "quadratic") return CostKind::quadratic;
  throw Error(ErrorCode::invalid_config, "unknown cost kind '" + std::string(s) + "'");
}

struct CostModel {
  CostKind kind = CostKind::none;
  double rate = 0.0;

  static CostModel none() { return {}; }
  static CostModel proportional(double rate) { return {CostKind::proportional, rate}; }
  static CostModel quadratic(double rate) { return {CostKind::quadratic, rate}; }

  void validate() const {
    if (kind != CostKind::none && !(rate >= 0.0)) throw Error(ErrorCode::invalid_config, "cost rate must be >= 0");
  }

  /// Dollar cost of a dollar trade of size `trade` (>= 0).
  double dollar_cost(double trade) const {
    switch (kind) {
      case CostKind::none: return 0.0;
      case CostKind::proportional: return rate * trade;
      case CostKind::quadratic: return rate * trade * trade;
    }
    return 0.0;
  }

  /// Short identifier such as "none", "prop20", "quad50" (rate in bps).
  std::string tag() const {
    if (kind == CostKind::none) return "none";
    const double bps = rate * 1e4;
    std::string num = std::abs(bps - std::round(bps)) < 1e-9 ? std::to_string(static_cast<long long>(std::round(bps)))
                                                               : format_double(bps);
    return (kind == CostKind::proportional ? "prop" : "quad") + num;
  }
};

struct BacktestOptions {
  double initial_wealth = 1.0;
  bool charge_entry = true;
  /// Monthly risk-free returns added to the strategy return; empty = excess only.
  std::vector<double> risk_free;
};

struct BacktestReport {
  std::vector<Month> months;
  std::vector<double> target_weight;
  std::vector<double> held_weight;
  std::vector<double> gross;
  std::vector<double> cost;         // fraction of wealth at the start of the month
  std::vector<double> dollar_cost;
  std::vector<double> dollar_turnover;
  std::vector<bool> rebalanced;
  std::vector<double> net;
  std::vector<double> wealth;       // end-of-month wealth
  int rebalance_interval = 1;
  double initial_wealth = 1.0;
  bool entry_charged = true;
  bool bankrupt = false;            // path truncated at the first month with wealth <= 0

  std::size_t size() const noexcept { return months.size(); }
  double terminal_wealth() const noexcept { return wealth.empty() ? initial_wealth : wealth.back(); }
  double total_dollar_cost() const {
    double s = 0.0;
    for (double c : dollar_cost) s += c;
    return s;
  }
};

inline BacktestReport run_backtest(const WeightSeries& ws, const ReturnSeries& returns, const CostModel& cost,
                                   int interval = 1, const BacktestOptions& opt = {}) {
  cost.validate();
  if (ws.months != returns.months)
    throw Error(ErrorCode::misalignment, "weight months differ from return months");
  if (interval < 1) throw Error(ErrorCode::invalid_argument, "rebalance interval must be >= 1");
  if (!(opt.initial_wealth > 0.0)) throw Error(ErrorCode::invalid_argument, "initial wealth must be > 0");
  if (!opt.risk_free.empty() && opt.risk_free.size() != ws.size())
    throw Error(ErrorCode::misalignment, "risk-free series length differs from weights");

  BacktestReport r;
  r.rebalance_interval = interval;
  r.initial_wealth = opt.initial_wealth;
  r.entry_charged = opt.charge_entry;
  double wealth = opt.initial_wealth;
  double held = 0.0;
  for (std::size_t t = 0; t < ws.size(); ++t) {
    const bool rebalance = t % static_cast<std::size_t>(interval) == 0;
    double trade = 0.0, dcost = 0.0;
    if (rebalance) {
      trade = wealth * std::fabs(ws.weight[t] - held);
      dcost = (t == 0 && !opt.charge_entry) ? 0.0 : cost.dollar_cost(trade);
      held = ws.weight[t];
    }
    const double gross = held * returns.values[t];
    const double cost_frac = dcost / wealth;
    double net = gross - cost_frac;
    if (!opt.risk_free.empty()) net += opt.risk_free[t];
    wealth = wealth * (1.0 + net);

    r.months.push_back(ws.months[t]);
    r.target_weight.push_back(ws.weight[t]);
    r.held_weight.push_back(held);
    r.gross.push_back(gross);
    r.cost.push_back(cost_frac);
    r.dollar_cost.push_back(dcost);
    r.dollar_turnover.push_back(trade);
    r.rebalanced.push_back(rebalance);
    r.net.push_back(net);
    r.wealth.push_back(wealth);
    if (!(wealth > 0.0)) {
      r.bankrupt = true;
      break;
    }
  }
  return r;
}

/// Annualized Sharpe ratio mean(excess) / sd(excess) * sqrt(12), with the
/// sample (n - 1) standard deviation. `rf` may be empty (zero).
inline double sharpe(std::span<const double> net, std::span<const double> rf = {}) {
  if (net.size() < 2) throw Error(ErrorCode::too_few_observations, "Sharpe needs at least 2 returns");
  if (!rf.empty() && rf.size() != net.size()) throw Error(ErrorCode::misalignment, "risk-free length differs");
  std::vector<double> ex(net.begin(), net.end());
  if (!rf.empty())
    for (std::size_t i = 0; i < ex.size(); ++i) ex[i] -= rf[i];
  if (stats::all_equal(ex)) throw Error(ErrorCode::zero_volatility, "returns have zero volatility");
  const double sd = stats::sample_stdev(ex);
  if (!(sd > 0.0)) throw Error(ErrorCode::zero_volatility, "returns have zero volatility");
  return stats::mean(ex) / sd * std::sqrt(12.0);
}

/// Largest peak-to-trough loss of a wealth path that starts at `start`.
inline double max_drawdown(std::span<const double> wealth, double start) {
  double peak = start, mdd = 0.0;
  for (double w : wealth) {
    peak = std::max(peak, w);
    mdd = std::max(mdd, 1.0 - w / peak);
  }
  return mdd;
}

struct PeriodSpec {
  std::string label;
  Month start;
  Month end;  // inclusive
};

/// Full test period plus the three overlapping sub-horizons.
inline std::vector<PeriodSpec> default_periods() {
  return {{"2003-2022", Month::of(2003, 1), Month::of(2022, 12)},
          {"2003-2007", Month::of(2003, 1), Month::of(2007, 12)},
          {"2007-2015", Month::of(2007, 1), Month::of(2015, 12)},
          {"2015-2022", Month::of(2015, 1), Month::of(2022, 12)}};
}

struct PeriodMetrics {
  std::string label;
  std::size_t n_months = 0;
  double sharpe = 0.0;  // NaN when the period's returns have zero volatility
  double terminal_wealth = 1.0;  // growth of 1 invested at the period start
  double max_drawdown = 0.0;
};

inline std::vector<PeriodMetrics> subperiod_metrics(const BacktestReport& report, const std::vector<PeriodSpec>& periods) {
  std::vector<PeriodMetrics> out;
  for (const auto& p : periods) {
    if (p.end < p.start) throw Error(ErrorCode::invalid_argument, "period '" + p.label + "' ends before it starts");
    std::vector<double> net, path;
    double w = 1.0;
    for (std::size_t i = 0; i < report.size(); ++i) {
      if (report.months[i] < p.start || p.end < report.months[i]) continue;
      net.push_back(report.net[i]);
      w *= 1.0 + report.net[i];
      path.push_back(w);
    }
    PeriodMetrics m;
    m.label = p.label;
    if (net.empty()) {
      // A bankrupt path stops early; later periods hold nothing.
      if (!report.bankrupt || report.months.empty() || !(report.months.back() < p.start))
        throw Error(ErrorCode::empty_period, "period '" + p.label + "' has no months in the report");
      m.sharpe = std::numeric_limits<double>::quiet_NaN();
      m.terminal_wealth = 0.0;
      m.max_drawdown = 1.0;
      out.push_back(std::move(m));
      continue;
    }
    m.n_months = net.size();
    try {
      m.sharpe = sharpe(net);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::zero_volatility && e.code() != ErrorCode::too_few_observations) throw;
      m.sharpe = std::numeric_limits<double>::quiet_NaN();
    }
    m.terminal_wealth = w;
    m.max_drawdown = max_drawdown(path, 1.0);
    out.push_back(std::move(m));
  }
  return out;
}

/// Months [begin, end) of a weight series and its returns.
inline std::pair<WeightSeries, ReturnSeries> slice(const WeightSeries& ws, const ReturnSeries& rs, std::size_t begin,
                                                   std::size_t end) {
  auto cut = [&](const auto& v) { return std::decay_t<decltype(v)>(v.begin() + static_cast<std::ptrdiff_t>(begin),
                                                                   v.begin() + static_cast<std::ptrdiff_t>(end)); };
  return {WeightSeries{cut(ws.months), cut(ws.weight), cut(ws.variance_used)}, ReturnSeries{cut(rs.months), cut(rs.values)}};
}

struct IntervalScore {
  int interval;
  double validation_wealth;
};

struct IntervalSelection {
  int interval = 1;
  std::size_t validation_months = 0;
  std::vector<IntervalScore> table;
  BacktestReport holdout;          // remaining months at the selected interval
  BacktestReport holdout_monthly;  // remaining months rebalanced monthly

  /// Annualized return pickup of the selected interval over monthly
  /// rebalancing on the holdout months.
  double annualized_extra_return() const {
    if (holdout.size() == 0) return 0.0;
    const double years = static_cast<double>(holdout.size()) / 12.0;
    const double a = std::pow(holdout.terminal_wealth() / holdout.initial_wealth, 1.0 / years);
    const double b = std::pow(holdout_monthly.terminal_wealth() / holdout_monthly.initial_wealth, 1.0 / years);
    return a - b;
  }
};

inline std::vector<int> default_interval_grid() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}; }

/// Picks the interval with the highest terminal wealth on the first
/// `validation_fraction` of the months (ties go to the smaller interval),
/// then runs it, and monthly rebalancing, on the remaining months from a
/// fresh `opt.initial_wealth`.
inline IntervalSelection select_rebalance_interval(const WeightSeries& ws, const ReturnSeries& returns,
                                                   const CostModel& cost,
                                                   const std::vector<int>& grid = default_interval_grid(),
                                                   double validation_fraction = 0.40, const BacktestOptions& opt = {}) {
  if (grid.empty()) throw Error(ErrorCode::invalid_argument, "empty interval grid");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw Error(ErrorCode::invalid_argument, "validation fraction must lie in (0, 1)");
  if (ws.months != returns.months) throw Error(ErrorCode::misalignment, "weight months differ from return months");
  const auto n = ws.size();
  const auto n_val = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(n) + 1e-9));
  const int max_k = *std::max_element(grid.begin(), grid.end());
  if (n_val < static_cast<std::size_t>(max_k))
    throw Error(ErrorCode::insufficient_rows, "validation prefix of " + std::to_string(n_val) +
                                                  " months is shorter than the largest interval " + std::to_string(max_k));

  auto sub_opt = [&](std::size_t b, std::size_t e) {
    BacktestOptions o = opt;
    if (!o.risk_free.empty())
      o.risk_free.assign(opt.risk_free.begin() + static_cast<std::ptrdiff_t>(b),
                         opt.risk_free.begin() + static_cast<std::ptrdiff_t>(e));
    return o;
  };

  IntervalSelection sel;
  sel.validation_months = n_val;
  const auto [vw, vr] = slice(ws, returns, 0, n_val);
  const auto vopt = sub_opt(0, n_val);
  std::optional<IntervalScore> best;
  std::vector<int> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (int k : sorted) {
    const auto rep = run_backtest(vw, vr, cost, k, vopt);
    const double tw = rep.bankrupt ? std::min(rep.terminal_wealth(), 0.0) : rep.terminal_wealth();
    sel.table.push_back({k, tw});
    if (!best || tw > best->validation_wealth) best = IntervalScore{k, tw};
  }
  sel.interval = best->interval;

  const auto [hw, hr] = slice(ws, returns, n_val, n);
  const auto hopt = sub_opt(n_val, n);
  if (hw.size() > 0) {
    sel.holdout = run_backtest(hw, hr, cost, sel.interval, hopt);
    sel.holdout_monthly = run_backtest(hw, hr, cost, 1, hopt);
  }
  return sel;
}

/// Ratio of first-month dollar costs of two otherwise identical runs at
/// different initial wealth. For quadratic costs this is N^2.
inline double cost_scaling_check(const BacktestReport& base, const BacktestReport& scaled) {
  if (base.size() == 0 || scaled.size() == 0) throw Error(ErrorCode::too_few_observations, "empty report");
  if (base.dollar_cost.front() == 0.0) throw Error(ErrorCode::zero_denominator, "base run has no first-month cost");
  return scaled.dollar_cost.front() / base.dollar_cost.front();
}

inline void write_backtest_csv(std::ostream& os, const BacktestReport& r) {
  os << "yyyymm,target_weight,held_weight,gross,cost,net,wealth\n";
  for (std::size_t i = 0; i < r.size(); ++i)
    os << r.months[i].yyyymm() << ',' << format_double(r.target_weight[i]) << ',' << format_double(r.held_weight[i])
       << ',' << format_double(r.gross[i]) << ',' << format_double(r.cost[i]) << ',' << format_double(r.net[i]) << ','
       << format_double(r.wealth[i]) << '\n';
}

}  // namespace factor_timing
