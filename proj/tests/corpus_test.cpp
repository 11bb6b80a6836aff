#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "scp/corpus.hpp"
#include "test_support.hpp"

using namespace scp;
using namespace scp::test;

TEST_CASE("bin_average of identical values is exactly that value") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    double v = (rng() >> 11) * 0x1.0p-53 * 120.0 + 1e-6;
    std::size_t n = 1 + rng() % 12;
    std::vector<double> vals(n, v);
    CHECK(bin_average(vals.data(), n) == v);  // bit-exact
  }
}

TEST_CASE("bin_average stays inside the member range") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    std::size_t n = 2 + rng() % 10;
    std::vector<double> vals(n);
    double lo = 1e18, hi = -1e18;
    for (auto& v : vals) {
      v = (rng() >> 11) * 0x1.0p-53 * 90.0;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    double m = bin_average(vals.data(), n);
    CHECK(m >= lo);
    CHECK(m <= hi);
  }
}

TEST_CASE("aggregate_bins groups by 5-min bin with population stats") {
  std::vector<TrafficObservation> obs;
  // Four observations in one bin: speeds 50,60,70,80 -> mean 65, pop std
  // sqrt(125).
  for (int i = 0; i < 4; ++i)
    obs.push_back({0, kMonday + i * 60, 50.0 + 10 * i, 30.0, 5.0});
  // One observation in the next bin.
  obs.push_back({0, kMonday + 300, 44.0, 12.0, 3.0});
  auto bins = aggregate_bins(std::move(obs));
  REQUIRE(bins.size() == 2);
  CHECK(bins[0].segment == 0);
  CHECK(bins[0].bin_start == kMonday);
  CHECK(bins[0].n_obs == 4);
  CHECK(bins[0].avg_speed == 65.0);
  CHECK(bins[0].std_speed == doctest::Approx(std::sqrt(125.0)).epsilon(1e-12));
  CHECK(bins[1].bin_start == kMonday + 300);
  CHECK(bins[1].avg_speed == 44.0);
  CHECK(bins[1].std_speed == 0.0);
}

TEST_CASE("baseline excludes crash days for the affected corridor only") {
  LineCorpusOptions opt;
  opt.segments = 6;
  opt.days = 6;
  Corpus c = make_line_corpus(opt);
  // Slow day 2 everywhere so its exclusion is visible in the mean.
  carve_dip(c, 0, 5, kMonday + 2 * kDaySeconds,
            kMonday + 3 * kDaySeconds - kBinSeconds, 30.0);
  // Crash at segment 4, noon of day 2. Static envelope = segment and 2 mi
  // downstream; with 0.5-mi segments that marks segments 0..4, not 5.
  add_crash(c, "X1", 4, kMonday + 2 * kDaySeconds + 12 * 3600);

  auto calendar = build_crash_calendar(c);
  for (int s = 0; s <= 4; ++s) CHECK(calendar[s].count(day_index(c.crashes[0].timestamp)));
  CHECK(!calendar[5].count(day_index(c.crashes[0].timestamp)));

  auto table = build_baseline(c, calendar);
  const int slot = 12 * 12;  // noon
  const SpeedBaseline* guarded = table.find(4, slot);
  const SpeedBaseline* exposed = table.find(5, slot);
  REQUIRE(guarded);
  REQUIRE(exposed);
  CHECK(guarded->day_count == 5);
  CHECK(exposed->day_count == 6);
  CHECK(guarded->mean_speed == 60.0);               // crash day dropped
  CHECK(exposed->mean_speed == doctest::Approx(55.0));  // slow day averaged in
}

TEST_CASE("crash calendar marks the spill-over day of a late crash") {
  LineCorpusOptions opt;
  opt.segments = 3;
  opt.days = 4;
  Corpus c = make_line_corpus(opt);
  // 23:30 crash: the 2-h tail crosses midnight into the next day.
  add_crash(c, "X1", 1, kMonday + kDaySeconds - 1800);
  auto calendar = build_crash_calendar(c);
  CHECK(calendar[1].count(day_index(kMonday)));
  CHECK(calendar[1].count(day_index(kMonday) + 1));
  CHECK(!calendar[1].count(day_index(kMonday) + 2));
}

TEST_CASE("low-confidence flag below three clean days") {
  LineCorpusOptions opt;
  opt.segments = 3;
  opt.days = 4;
  Corpus c = make_line_corpus(opt);
  // Crashes on days 0 and 1 at the upstream end: their static envelope covers
  // only segment 0, leaving it 2 clean days while the others keep 4.
  add_crash(c, "A", 0, kMonday + 12 * 3600);
  add_crash(c, "B", 0, kMonday + kDaySeconds + 12 * 3600);
  auto table = build_baseline(c, build_crash_calendar(c));
  const SpeedBaseline* b = table.find(0, 12 * 12);
  REQUIRE(b);
  CHECK(b->day_count == 2);
  CHECK(b->low_confidence);
  const SpeedBaseline* clean = table.find(1, 12 * 12);
  REQUIRE(clean);
  CHECK(clean->day_count == 4);
  CHECK(!clean->low_confidence);
}

TEST_CASE("match_weather picks nearest record, earlier on ties") {
  Corpus c = make_line_corpus({.segments = 2, .days = 1});
  add_weather(c, 0, kMonday + 1000, 0.0);
  add_weather(c, 0, kMonday + 3000, 2.5);
  const WeatherRecord* w = match_weather(c, 0, kMonday + 1900);
  REQUIRE(w);
  CHECK(w->timestamp == kMonday + 1000);  // 900 vs 1100 away
  w = match_weather(c, 0, kMonday + 2000);  // tie, 1000 both ways
  REQUIRE(w);
  CHECK(w->timestamp == kMonday + 1000);
  w = match_weather(c, 0, kMonday + 2100);
  REQUIRE(w);
  CHECK(w->precipitation == 2.5);
  // Staleness: nearest record 2h away is refused at the 1h default.
  CHECK(match_weather(c, 0, kMonday + 3000 + 7200) == nullptr);
  CHECK(match_weather(c, 1, kMonday + 1000) == nullptr);  // no records at all
}

TEST_CASE("upstream distance walks the carriageway") {
  Corpus c = make_line_corpus({.segments = 5, .days = 1, .miles = 0.4});
  CHECK(c.upstream_distance_miles(4, 4) == 0.0);
  // From segment 4 back to 2: traverse segments 3 and 2.
  CHECK(c.upstream_distance_miles(4, 2) == doctest::Approx(0.8));
  CHECK(c.upstream_distance_miles(4, 0) == doctest::Approx(1.6));
  CHECK(c.upstream_distance_miles(2, 4) == -1.0);  // downstream, not upstream
}

TEST_CASE("envelope segment walk honours the 2-mile budget") {
  Corpus c = make_line_corpus({.segments = 8, .days = 1, .miles = 0.6});
  auto segs = envelope_segments(c, 7, 2.0);
  // Cumulative upstream miles: 0.6, 1.2, 1.8, 2.4 -> three upstream segments.
  CHECK(segs == std::vector<int>{4, 5, 6, 7});
  auto from_edge = envelope_segments(c, 1, 2.0);
  CHECK(from_edge == std::vector<int>{0, 1});  // corridor boundary truncates
}
