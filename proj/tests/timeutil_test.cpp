#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "scp/timeutil.hpp"

using namespace scp;

TEST_CASE("rfc3339 parse of known instants") {
  // Independently computed unix seconds.
  CHECK(parse_rfc3339("1970-01-01T00:00:00Z") == Instant{0});
  CHECK(parse_rfc3339("2024-03-04T00:00:00Z") == Instant{1709510400});
  CHECK(parse_rfc3339("2024-02-29T12:30:45Z") == Instant{1709209845});  // leap day
  CHECK(parse_rfc3339("2023-12-31T23:59:59Z") == Instant{1704067199});
  CHECK(parse_rfc3339("2000-02-29T00:00:00Z") == Instant{951782400});  // 400-year leap
}

TEST_CASE("rfc3339 rejects malformed strings") {
  CHECK(!parse_rfc3339("2024-03-04 00:00:00Z"));   // space separator
  CHECK(!parse_rfc3339("2024-03-04T00:00:00"));    // missing Z
  CHECK(!parse_rfc3339("2024-03-04T00:00:00+01:00"));
  CHECK(!parse_rfc3339("2024-13-01T00:00:00Z"));   // month 13
  CHECK(!parse_rfc3339("2024-02-30T00:00:00Z"));   // Feb 30
  CHECK(!parse_rfc3339("2023-02-29T00:00:00Z"));   // non-leap Feb 29
  CHECK(!parse_rfc3339("2024-03-04T24:00:00Z"));   // hour 24
  CHECK(!parse_rfc3339("2024-3-04T00:00:00Z"));    // unpadded month
  CHECK(!parse_rfc3339(""));
}

TEST_CASE("format and parse round-trip across year boundaries") {
  for (Instant t : {Instant{0}, Instant{951782400}, Instant{1709510400},
                    Instant{1704067199}, Instant{1735689600}}) {
    auto s = format_rfc3339(t);
    auto back = parse_rfc3339(s);
    REQUIRE(back.has_value());
    CHECK(*back == t);
  }
}

TEST_CASE("day-of-week and weekday flags") {
  const Instant monday = 1709510400;  // 2024-03-04
  for (int d = 0; d < 7; ++d)
    CHECK(day_of_week(monday + d * kDaySeconds) == d);
  CHECK(is_weekday(monday));
  CHECK(is_weekday(monday + 4 * kDaySeconds));      // Friday
  CHECK(!is_weekday(monday + 5 * kDaySeconds));     // Saturday
  CHECK(!is_weekday(monday + 6 * kDaySeconds));     // Sunday
  CHECK(day_of_week(Instant{0}) == 3);              // 1970-01-01 was a Thursday
}

TEST_CASE("bin and slot arithmetic") {
  const Instant t = 1709510400 + 7 * 3600 + 53 * 60 + 20;  // 07:53:20
  CHECK(bin_start_of(t) == 1709510400 + 7 * 3600 + 50 * 60);
  CHECK(slot_of_day(t) == 7 * 12 + 10);  // 07:50 bin is slot 94
  CHECK(hour_of_day(t) == 7);
  CHECK(day_index(t) == 1709510400 / kDaySeconds);
  CHECK(bin_start_of(bin_start_of(t)) == bin_start_of(t));
  CHECK(slot_of_day(1709510400) == 0);
  CHECK(slot_of_day(1709510400 + kDaySeconds - 1) == 287);
}
