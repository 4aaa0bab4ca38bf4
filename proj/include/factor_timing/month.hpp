#pragma once

#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include "factor_timing/error.hpp"

namespace factor_timing {

/// Calendar month stamped as a YYYYMM integer. Arithmetic carries across
/// year boundaries (199912 + 1 -> 200001).
class Month {
 public:
  constexpr Month() = default;

  static constexpr std::optional<Month> try_from_yyyymm(std::int64_t yyyymm) noexcept {
    if (yyyymm < 100001 || yyyymm > 999912) return std::nullopt;
    const auto mm = yyyymm % 100;
    if (mm < 1 || mm > 12) return std::nullopt;
    return Month(static_cast<int>(yyyymm / 100), static_cast<int>(mm));
  }

  static Month from_yyyymm(std::int64_t yyyymm) {
    if (auto m = try_from_yyyymm(yyyymm)) return *m;
    throw Error(ErrorCode::invalid_argument, "not a YYYYMM month stamp: " + std::to_string(yyyymm));
  }

  static constexpr Month of(int year, int month) noexcept { return Month(year, month); }

  constexpr int year() const noexcept { return index_ / 12; }
  constexpr int month() const noexcept { return index_ % 12 + 1; }
  constexpr int yyyymm() const noexcept { return year() * 100 + month(); }

  constexpr Month plus(int months) const noexcept {
    Month m;
    m.index_ = index_ + months;
    return m;
  }
  constexpr Month next() const noexcept { return plus(1); }
  constexpr Month prev() const noexcept { return plus(-1); }

  /// Signed number of months from `other` to this month.
  constexpr int months_since(Month other) const noexcept { return index_ - other.index_; }

  /// "YYYY-MM"
  std::string iso() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year(), month());
    return buf;
  }

  constexpr auto operator<=>(const Month&) const = default;

 private:
  constexpr Month(int year, int month) noexcept : index_(year * 12 + (month - 1)) {}

  int index_ = 0;  // months since year 0
};

}  // namespace factor_timing
