#pragma once

/**
 * @file dataio.hpp
 * @brief Ingestion of the factor and predictor tables and construction of
 *        the aligned monthly panel used by every downstream stage.
 *
 * Two source layouts are supported:
 *
 *  - a factor table (one row per month, columns date, Mkt-RF, SMB, HML,
 *    RMW, CMA, RF), normally published in percent;
 *  - a predictor table (columns yyyymm, tbl, lty, AAA, BAA, corpr, and any
 *    number of extra columns), normally published in decimals.
 *
 * Column names are canonicalized on read: lower case, '-' and ' ' become
 * '_' (so "Mkt-RF" is stored as "mkt_rf" and "BAA" as "baa"). Missing
 * cells and sentinels ("", "NA", "NaN", "-99.99", "-999") are stored as NaN.
 *
 * The aligned dataset carries the derived spreads
 *
 *     tms = lty - tbl        dfy = baa - aaa
 *
 * and one-month lags "<column>_lag1", where the lag at month t is the source
 * value at calendar month t-1. A row is usable when its target and every
 * configured feature are defined.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "factor_timing/error.hpp"
#include "factor_timing/month.hpp"
#include "factor_timing/stats.hpp"

namespace factor_timing {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) noexcept { return std::isnan(v); }

enum class Unit { percent, decimal };

/// Months plus named value columns, one value (possibly NaN) per month.
struct MonthlyPanel {
  std::vector<Month> months;
  std::map<std::string, std::vector<double>> columns;

  std::size_t size() const noexcept { return months.size(); }
  bool has(const std::string& name) const { return columns.contains(name); }

  const std::vector<double>& column(const std::string& name) const {
    auto it = columns.find(name);
    if (it == columns.end()) throw Error(ErrorCode::missing_column, "no column '" + name + "'");
    return it->second;
  }

  std::optional<std::size_t> index_of(Month m) const {
    auto it = std::lower_bound(months.begin(), months.end(), m);
    if (it == months.end() || *it != m) return std::nullopt;
    return static_cast<std::size_t>(it - months.begin());
  }

  /// Value of `name` at month `m`, NaN when the month or cell is absent.
  double at(const std::string& name, Month m) const {
    auto idx = index_of(m);
    if (!idx) return kMissing;
    return column(name)[*idx];
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '\n'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

/// Splits one CSV record. Double-quoted fields may contain commas; the
/// quotes are removed. Whitespace around fields is trimmed.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.emplace_back(trim(cur));
  return out;
}

inline std::string canonical_name(std::string_view raw) {
  std::string s(trim(raw));
  for (char& c : s) {
    if (c == '-' || c == ' ') c = '_';
    else if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

inline bool is_sentinel(std::string_view cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "-99.99" ||
         cell == "-999" || cell == "." || cell == "-";
}

/// Parses a numeric cell. Thousands separators inside the cell are ignored.
/// Returns nullopt for text that is not a number.
inline std::optional<double> parse_number(std::string_view cell) {
  std::string buf;
  buf.reserve(cell.size());
  for (char c : cell)
    if (c != ',') buf.push_back(c);
  if (!buf.empty() && buf.front() == '+') buf.erase(0, 1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{} || ptr != buf.data() + buf.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<Month> parse_month_cell(std::string_view cell) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size()) return std::nullopt;
  return Month::try_from_yyyymm(v);
}

struct RawTable {
  std::vector<std::string> header;  // canonical names
  std::vector<std::size_t> line_numbers;
  std::vector<std::vector<std::string>> rows;
};

inline RawTable read_table(std::string_view text) {
  RawTable t;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (trim(line).empty()) {
      if (nl == text.size()) break;
      continue;
    }
    auto cells = split_csv_line(line);
    if (!have_header) {
      for (const auto& c : cells) t.header.push_back(canonical_name(c));
      have_header = true;
    } else {
      t.rows.push_back(std::move(cells));
      t.line_numbers.push_back(line_no);
    }
    if (nl == text.size()) break;
  }
  if (!have_header || t.rows.empty()) throw Error(ErrorCode::empty_input, "no data rows");
  return t;
}

/// Builds a month-sorted panel from a raw table. `date_col` is the index of
/// the month column; `required` lists columns that must exist. Non-numeric
/// cells are errors in required columns and in optional ones alike, except
/// blanks and sentinels which become NaN.
inline MonthlyPanel to_panel(const RawTable& t, std::size_t date_col, const std::vector<std::string>& required,
                             double scale) {
  for (const auto& r : required) {
    if (std::find(t.header.begin(), t.header.end(), r) == t.header.end())
      throw Error(ErrorCode::missing_column, "required column '" + r + "' absent from header");
  }
  std::vector<std::pair<Month, std::size_t>> order;
  order.reserve(t.rows.size());
  std::set<Month> seen;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const auto line = std::to_string(t.line_numbers[i]);
    if (row.size() != t.header.size())
      throw Error(ErrorCode::malformed_row, "line " + line + ": expected " + std::to_string(t.header.size()) +
                                                " cells, found " + std::to_string(row.size()));
    auto m = parse_month_cell(row[date_col]);
    if (!m) throw Error(ErrorCode::malformed_row, "line " + line + ": bad month stamp '" + row[date_col] + "'");
    if (!seen.insert(*m).second)
      throw Error(ErrorCode::duplicate_month, "line " + line + ": month " + std::to_string(m->yyyymm()) +
                                                  " appears more than once");
    order.emplace_back(*m, i);
  }
  std::sort(order.begin(), order.end());

  MonthlyPanel p;
  p.months.reserve(order.size());
  for (const auto& [m, _] : order) p.months.push_back(m);
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (c == date_col) continue;
    std::vector<double> col;
    col.reserve(order.size());
    for (const auto& [m, i] : order) {
      const auto& cell = t.rows[i][c];
      if (is_sentinel(cell)) {
        col.push_back(kMissing);
        continue;
      }
      auto v = parse_number(cell);
      if (!v)
        throw Error(ErrorCode::malformed_row, "line " + std::to_string(t.line_numbers[i]) + ": non-numeric cell '" +
                                                  cell + "' in column '" + t.header[c] + "'");
      col.push_back(scale == 1.0 ? *v : *v / scale);
    }
    p.columns.emplace(t.header[c], std::move(col));
  }
  return p;
}

}  // namespace detail

/// Parses a single-table factor CSV. The date column is the first column
/// (its header may be empty, "date" or "yyyymm").
inline MonthlyPanel parse_factor_csv(std::string_view raw, Unit unit = Unit::percent) {
  auto t = detail::read_table(raw);
  const auto& first = t.header.front();
  if (!(first.empty() || first == "date" || first == "yyyymm"))
    throw Error(ErrorCode::missing_column, "first column must be the month stamp, found '" + first + "'");
  return detail::to_panel(t, 0, {"mkt_rf", "smb", "hml", "rmw", "cma", "rf"},
                          unit == Unit::percent ? 100.0 : 1.0);
}

/// Parses a predictor CSV keyed by `yyyymm`. Extra columns are retained.
inline MonthlyPanel parse_predictor_csv(std::string_view raw, Unit unit = Unit::decimal) {
  auto t = detail::read_table(raw);
  auto it = std::find(t.header.begin(), t.header.end(), "yyyymm");
  if (it == t.header.end()) throw Error(ErrorCode::missing_column, "required column 'yyyymm' absent from header");
  return detail::to_panel(t, static_cast<std::size_t>(it - t.header.begin()), {"tbl", "lty", "aaa", "baa", "corpr"},
                          unit == Unit::percent ? 100.0 : 1.0);
}

inline const std::vector<std::string>& default_features() {
  static const std::vector<std::string> names{"tms_lag1", "dfy_lag1", "cma_lag1"};
  return names;
}

/// Train/test month ranges (inclusive). Validated on construction.
class SplitSpec {
 public:
  SplitSpec(Month train_start, Month train_end, Month test_start, Month test_end)
      : train_start_(train_start), train_end_(train_end), test_start_(test_start), test_end_(test_end) {
    if (train_start > train_end || test_start > test_end)
      throw Error(ErrorCode::invalid_argument, "split range start after end");
    if (!(train_end < test_start))
      throw Error(ErrorCode::invalid_argument, "test_start must come after train_end");
  }

  /// 1963-07..2002-12 train, 2003-01..2022-12 test.
  static SplitSpec standard() {
    return SplitSpec(Month::of(1963, 7), Month::of(2002, 12), Month::of(2003, 1), Month::of(2022, 12));
  }

  Month train_start() const noexcept { return train_start_; }
  Month train_end() const noexcept { return train_end_; }
  Month test_start() const noexcept { return test_start_; }
  Month test_end() const noexcept { return test_end_; }

 private:
  Month train_start_, train_end_, test_start_, test_end_;
};

/// Merged, lagged and filtered monthly panel. Rows are consecutive months.
class AlignedDataset {
 public:
  AlignedDataset(MonthlyPanel panel, std::vector<std::string> feature_names, std::string target_name)
      : panel_(std::move(panel)), features_(std::move(feature_names)), target_(std::move(target_name)) {
    for (const auto& f : features_) (void)panel_.column(f);
    (void)panel_.column(target_);
  }

  const MonthlyPanel& panel() const noexcept { return panel_; }
  const std::vector<std::string>& feature_names() const noexcept { return features_; }
  const std::string& target_name() const noexcept { return target_; }
  const std::vector<Month>& months() const noexcept { return panel_.months; }
  std::size_t size() const noexcept { return panel_.size(); }
  std::size_t n_features() const noexcept { return features_.size(); }
  Month first_usable_month() const { return panel_.months.front(); }
  Month last_month() const { return panel_.months.back(); }

  /// Extent of the inner join before lag filtering.
  Month merged_first() const noexcept { return merged_first_; }
  Month merged_last() const noexcept { return merged_last_; }
  std::size_t merged_count() const noexcept { return merged_count_; }
  void set_merge_extent(Month first, Month last, std::size_t count) {
    merged_first_ = first;
    merged_last_ = last;
    merged_count_ = count;
  }

  std::optional<std::size_t> index_of(Month m) const { return panel_.index_of(m); }

  const std::vector<double>& target() const { return panel_.column(target_); }

  /// Feature matrix of rows [begin, end).
  Eigen::MatrixXd features(std::size_t begin, std::size_t end) const {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(features_.size()));
    for (std::size_t j = 0; j < features_.size(); ++j) {
      const auto& col = panel_.column(features_[j]);
      for (std::size_t i = begin; i < end; ++i)
        X(static_cast<Eigen::Index>(i - begin), static_cast<Eigen::Index>(j)) = col[i];
    }
    return X;
  }
  Eigen::MatrixXd features() const { return features(0, size()); }

  Eigen::VectorXd targets(std::size_t begin, std::size_t end) const {
    const auto& y = target();
    Eigen::VectorXd v(static_cast<Eigen::Index>(end - begin));
    for (std::size_t i = begin; i < end; ++i) v(static_cast<Eigen::Index>(i - begin)) = y[i];
    return v;
  }
  Eigen::VectorXd targets() const { return targets(0, size()); }

  Eigen::VectorXd feature_row(std::size_t i) const { return features(i, i + 1).row(0).transpose(); }

  /// Rows [begin, end) as a new dataset.
  AlignedDataset slice(std::size_t begin, std::size_t end) const {
    MonthlyPanel p;
    p.months.assign(panel_.months.begin() + static_cast<std::ptrdiff_t>(begin),
                    panel_.months.begin() + static_cast<std::ptrdiff_t>(end));
    for (const auto& [name, col] : panel_.columns)
      p.columns.emplace(name, std::vector<double>(col.begin() + static_cast<std::ptrdiff_t>(begin),
                                                  col.begin() + static_cast<std::ptrdiff_t>(end)));
    AlignedDataset out(std::move(p), features_, target_);
    out.set_merge_extent(merged_first_, merged_last_, merged_count_);
    return out;
  }

  /// Row range [begin, end) of months within [from, to].
  std::pair<std::size_t, std::size_t> range_of(Month from, Month to) const {
    auto lo = std::lower_bound(months().begin(), months().end(), from);
    auto hi = std::upper_bound(months().begin(), months().end(), to);
    const auto b = static_cast<std::size_t>(lo - months().begin());
    const auto e = static_cast<std::size_t>(hi - months().begin());
    return {b, std::max(b, e)};
  }

 private:
  MonthlyPanel panel_;
  std::vector<std::string> features_;
  std::string target_;
  Month merged_first_{}, merged_last_{};
  std::size_t merged_count_ = 0;
};

namespace detail {

/// Source series keyed by month, with missing values dropped.
using SourceSeries = std::map<Month, double>;

inline SourceSeries series_from(const MonthlyPanel& p, const std::string& name) {
  SourceSeries s;
  const auto& col = p.column(name);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!is_missing(col[i])) s.emplace(p.months[i], col[i]);
  return s;
}

inline SourceSeries spread(const MonthlyPanel& p, const std::string& hi, const std::string& lo) {
  SourceSeries s;
  const auto& a = p.column(hi);
  const auto& b = p.column(lo);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!is_missing(a[i]) && !is_missing(b[i])) s.emplace(p.months[i], a[i] - b[i]);
  return s;
}

inline double lookup(const SourceSeries& s, Month m) {
  auto it = s.find(m);
  return it == s.end() ? kMissing : it->second;
}

}  // namespace detail

/// Merges factor and predictor panels into an AlignedDataset.
///
/// Features must be named "<base>_lag1" where base is any factor column,
/// any predictor column, or one of the derived spreads tms / dfy.
inline AlignedDataset build_dataset(const MonthlyPanel& factors, const MonthlyPanel& predictors,
                                    const std::vector<std::string>& feature_names = default_features(),
                                    const std::string& target_name = "cma") {
  using detail::lookup;
  for (const auto& c : {"tbl", "lty", "aaa", "baa"})
    if (!predictors.has(c)) throw Error(ErrorCode::missing_column, std::string("predictor column '") + c + "' absent");
  if (!factors.has(target_name)) throw Error(ErrorCode::missing_column, "factor column '" + target_name + "' absent");

  std::map<std::string, detail::SourceSeries> sources;
  for (const auto& [name, _] : factors.columns) sources[name] = detail::series_from(factors, name);
  for (const auto& [name, _] : predictors.columns)
    if (!sources.contains(name)) sources[name] = detail::series_from(predictors, name);
  sources["tms"] = detail::spread(predictors, "lty", "tbl");
  sources["dfy"] = detail::spread(predictors, "baa", "aaa");

  std::vector<std::string> bases;
  for (const auto& f : feature_names) {
    constexpr std::string_view suffix = "_lag1";
    if (f.size() <= suffix.size() || f.compare(f.size() - suffix.size(), suffix.size(), suffix) != 0)
      throw Error(ErrorCode::invalid_argument, "feature '" + f + "' is not a one-month lag (<column>_lag1)");
    auto base = f.substr(0, f.size() - suffix.size());
    if (!sources.contains(base)) throw Error(ErrorCode::missing_column, "feature base column '" + base + "' absent");
    bases.push_back(std::move(base));
  }

  std::vector<Month> merged;
  std::set_intersection(factors.months.begin(), factors.months.end(), predictors.months.begin(),
                        predictors.months.end(), std::back_inserter(merged));
  if (merged.empty()) throw Error(ErrorCode::no_overlap, "factor and predictor tables share no months");

  const auto& target_src = sources.at(target_name);
  std::vector<Month> usable;
  for (Month m : merged) {
    if (is_missing(lookup(target_src, m))) continue;
    bool ok = true;
    for (const auto& b : bases)
      if (is_missing(lookup(sources.at(b), m.prev()))) {
        ok = false;
        break;
      }
    if (ok) usable.push_back(m);
  }
  if (usable.size() < 2)
    throw Error(ErrorCode::insufficient_rows,
                "only " + std::to_string(usable.size()) + " usable months after merging and lagging");
  for (std::size_t i = 1; i < usable.size(); ++i)
    if (usable[i] != usable[i - 1].next())
      throw Error(ErrorCode::misalignment, "usable months are not consecutive: gap between " +
                                               std::to_string(usable[i - 1].yyyymm()) + " and " +
                                               std::to_string(usable[i].yyyymm()));

  MonthlyPanel out;
  out.months = usable;
  auto add = [&](const std::string& name, auto&& value_at) {
    std::vector<double> col;
    col.reserve(usable.size());
    for (Month m : usable) col.push_back(value_at(m));
    out.columns.insert_or_assign(name, std::move(col));
  };
  for (const auto& name : {"cma", "mkt_rf", "tms", "dfy", "corpr"})
    if (sources.contains(name)) add(name, [&](Month m) { return lookup(sources.at(name), m); });
  add(target_name, [&](Month m) { return lookup(target_src, m); });
  for (const auto& name : {"tms", "dfy", "cma"})
    add(std::string(name) + "_lag1", [&](Month m) { return lookup(sources.at(name), m.prev()); });
  for (std::size_t j = 0; j < feature_names.size(); ++j)
    add(feature_names[j], [&](Month m) { return lookup(sources.at(bases[j]), m.prev()); });

  AlignedDataset ds(std::move(out), feature_names, target_name);
  ds.set_merge_extent(merged.front(), merged.back(), merged.size());
  return ds;
}

/// Partitions `ds` into the train and test month ranges of `spec`.
inline std::pair<AlignedDataset, AlignedDataset> split(const AlignedDataset& ds, const SplitSpec& spec) {
  auto [tb, te] = ds.range_of(spec.train_start(), spec.train_end());
  auto [sb, se] = ds.range_of(spec.test_start(), spec.test_end());
  if (tb == te) throw Error(ErrorCode::empty_partition, "training range holds no usable months");
  if (sb == se) throw Error(ErrorCode::empty_partition, "test range holds no usable months");
  return {ds.slice(tb, te), ds.slice(sb, se)};
}

inline void write_cell(std::ostream& os, double v) {
  if (!is_missing(v)) os << format_double(v);
}

/// Writes the aligned panel in decimal units. Columns beyond the fixed set
/// are appended when extra features are configured.
inline void write_aligned_csv(std::ostream& os, const AlignedDataset& ds) {
  std::vector<std::string> cols{"cma", "mkt_rf", "tms", "dfy", "corpr", "tms_lag1", "dfy_lag1", "cma_lag1"};
  for (const auto& f : ds.feature_names())
    if (std::find(cols.begin(), cols.end(), f) == cols.end()) cols.push_back(f);
  os << "yyyymm";
  for (const auto& c : cols) os << ',' << c;
  os << '\n';
  const auto& p = ds.panel();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << p.months[i].yyyymm();
    for (const auto& c : cols) {
      os << ',';
      if (p.has(c)) write_cell(os, p.column(c)[i]);
    }
    os << '\n';
  }
}

}  // namespace factor_timing
