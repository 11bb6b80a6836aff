#include "scp/timeutil.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace scp {
namespace {

// Days since epoch for a civil date (proleptic Gregorian).
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const int yoe = static_cast<int>(y - era * 400);
  const int doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const int doe = static_cast<int>(z - era * 146097);
  const int yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<int>(yoe + era * 400);
  const int doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const int mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

bool parse_int(const std::string& s, size_t pos, size_t len, int& out) {
  if (pos + len > s.size()) return false;
  for (size_t i = pos; i < pos + len; ++i)
    if (s[i] < '0' || s[i] > '9') return false;
  auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
  return ec == std::errc() && p == s.data() + pos + len;
}

bool days_in_month_ok(int y, int m, int d) {
  static constexpr std::array<int, 12> len = {31, 28, 31, 30, 31, 30,
                                             31, 31, 30, 31, 30, 31};
  if (m < 1 || m > 12 || d < 1) return false;
  int cap = len[m - 1];
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  if (m == 2 && leap) cap = 29;
  return d <= cap;
}

}  // namespace

std::optional<Instant> parse_rfc3339(const std::string& s) {
  // Exactly "YYYY-MM-DDTHH:MM:SSZ".
  if (s.size() != 20) return std::nullopt;
  if (s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' ||
      s[16] != ':' || s[19] != 'Z')
    return std::nullopt;
  int y, mo, d, h, mi, se;
  if (!parse_int(s, 0, 4, y) || !parse_int(s, 5, 2, mo) ||
      !parse_int(s, 8, 2, d) || !parse_int(s, 11, 2, h) ||
      !parse_int(s, 14, 2, mi) || !parse_int(s, 17, 2, se))
    return std::nullopt;
  if (!days_in_month_ok(y, mo, d)) return std::nullopt;
  if (h > 23 || mi > 59 || se > 59) return std::nullopt;
  return days_from_civil(y, mo, d) * kDaySeconds + h * 3600 + mi * 60 + se;
}

std::string format_rfc3339(Instant t) {
  std::int64_t days = t / kDaySeconds;
  std::int64_t sec = t % kDaySeconds;
  if (sec < 0) {
    sec += kDaySeconds;
    days -= 1;
  }
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", y, m, d,
                static_cast<int>(sec / 3600), static_cast<int>((sec / 60) % 60),
                static_cast<int>(sec % 60));
  return std::string(buf);
}

int day_of_week(Instant t) {
  std::int64_t days = t / kDaySeconds;
  if (t % kDaySeconds < 0) days -= 1;
  // 1970-01-01 was a Thursday.
  return static_cast<int>(((days % 7) + 7 + 3) % 7);
}

}  // namespace scp
