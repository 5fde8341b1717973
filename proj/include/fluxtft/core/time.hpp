#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace fluxtft {

/// Whole hours since 1970-01-01T00:00Z.
using Timestamp = std::int64_t;

struct CivilDate {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;
};

/// Days since the epoch for a proleptic Gregorian date (H. Hinnant's algorithm).
constexpr std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2 ? 1 : 0;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

constexpr CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {static_cast<int>(y + (m <= 2 ? 1 : 0)), m, d};
}

constexpr bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

constexpr unsigned days_in_month(int y, unsigned m) {
  constexpr unsigned table[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : table[m - 1];
}

constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a / b - ((a % b != 0) && ((a < 0) != (b < 0)) ? 1 : 0);
}

constexpr Timestamp make_timestamp(int y, unsigned m, unsigned d, unsigned hour = 0) {
  return days_from_civil(y, m, d) * 24 + hour;
}

inline CivilDate date_of(Timestamp t) { return civil_from_days(floor_div(t, 24)); }

inline int hour_of_day(Timestamp t) { return static_cast<int>(t - floor_div(t, 24) * 24); }

/// 1-based day of year.
inline int day_of_year(Timestamp t) {
  const CivilDate d = date_of(t);
  return static_cast<int>(days_from_civil(d.year, d.month, d.day) - days_from_civil(d.year, 1, 1)) + 1;
}

inline int month_of(Timestamp t) { return static_cast<int>(date_of(t).month); }

inline int year_of(Timestamp t) { return date_of(t).year; }

/// Parses "YYYY-MM-DDTHH[:MM[:SS]][Z]" (a space may replace the T).
/// Minutes and seconds must be zero: the grid is hourly.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  auto digits = [&](std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (s[i] < '0' || s[i] > '9') return false;
      v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
  };
  if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.remove_suffix(1);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  if (s.size() < 13 || !digits(0, 4, y) || s[4] != '-' || !digits(5, 2, mo) || s[7] != '-' ||
      !digits(8, 2, d) || (s[10] != 'T' && s[10] != ' ') || !digits(11, 2, h)) {
    return std::nullopt;
  }
  std::size_t pos = 13;
  if (pos < s.size()) {
    if (s[pos] != ':' || !digits(pos + 1, 2, mi)) return std::nullopt;
    pos += 3;
    if (pos < s.size()) {
      if (s[pos] != ':' || !digits(pos + 1, 2, se)) return std::nullopt;
      pos += 3;
    }
  }
  if (pos != s.size()) return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || static_cast<unsigned>(d) > days_in_month(y, mo) || h > 23 || mi != 0 ||
      se != 0) {
    return std::nullopt;
  }
  return make_timestamp(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), static_cast<unsigned>(h));
}

inline std::string format_timestamp(Timestamp t) {
  const CivilDate d = date_of(t);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:00:00Z", d.year, d.month, d.day, hour_of_day(t));
  return buf;
}

}  // namespace fluxtft
