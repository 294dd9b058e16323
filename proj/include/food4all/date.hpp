#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace food4all {

// Calendar date as a day count since 1970-01-01 (proleptic Gregorian).
class Date {
 public:
  constexpr Date() = default;
  static constexpr Date from_days(std::int64_t days) { Date d; d.days_ = days; return d; }
  static Date from_ymd(int year, unsigned month, unsigned day);
  // Accepts YYYY-MM-DD; throws Error(kParse) otherwise.
  static Date parse(std::string_view iso);
  static Date today();

  std::int64_t days() const { return days_; }
  std::string iso() const;
  Date plus_days(std::int64_t n) const { return from_days(days_ + n); }
  // Signed number of days from `earlier` to *this.
  std::int64_t days_since(Date earlier) const { return days_ - earlier.days_; }

  friend constexpr auto operator<=>(Date, Date) = default;

 private:
  std::int64_t days_ = 0;
};

}  // namespace food4all
