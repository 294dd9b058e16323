#include "food4all/date.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

#include "food4all/error.hpp"

namespace food4all {

namespace {

// Howard Hinnant's days_from_civil / civil_from_days.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

bool is_leap(std::int64_t y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

unsigned days_in_month(std::int64_t y, unsigned m) {
  static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

}  // namespace

Date Date::from_ymd(int year, unsigned month, unsigned day) {
  if (month < 1 || month > 12 || day < 1 || day > days_in_month(year, month)) {
    throw Error(ErrorCode::kParse, "invalid calendar date");
  }
  return from_days(days_from_civil(year, month, day));
}

Date Date::parse(std::string_view iso) {
  auto fail = [&] { return Error(ErrorCode::kParse, "expected YYYY-MM-DD date", std::string(iso)); };
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') throw fail();
  int y = 0;
  unsigned m = 0, d = 0;
  auto num = [&](std::string_view s, auto& out) {
    for (char c : s) {
      if (c < '0' || c > '9') throw fail();
    }
    std::from_chars(s.data(), s.data() + s.size(), out);
  };
  num(iso.substr(0, 4), y);
  num(iso.substr(5, 2), m);
  num(iso.substr(8, 2), d);
  try {
    return from_ymd(y, m, d);
  } catch (const Error&) {
    throw fail();
  }
}

Date Date::today() {
  const auto now = std::chrono::system_clock::now();
  const auto days = std::chrono::duration_cast<std::chrono::hours>(now.time_since_epoch()).count() / 24;
  return from_days(days);
}

std::string Date::iso() const {
  std::int64_t y;
  unsigned m, d;
  civil_from_days(days_, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u", static_cast<long long>(y), m, d);
  return buf;
}

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kPrecondition: return "precondition";
    case ErrorCode::kEmptyAnswer: return "empty_answer";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kUndefinedMetric: return "undefined_metric";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kToolNotFound: return "tool_not_found";
    case ErrorCode::kDuplicate: return "duplicate";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kTransport: return "transport_error";
    case ErrorCode::kProtocol: return "protocol_error";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kRejected: return "rejected";
  }
  return "unknown";
}

}  // namespace food4all
