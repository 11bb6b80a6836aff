#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "scp/timeutil.hpp"

namespace scp {

enum class SegmentType { Basic, Weaving, Merge, Diverge };
enum class WeatherCondition { Clear, Rain, Other };

std::optional<SegmentType> parse_segment_type(const std::string& s);
const char* segment_type_name(SegmentType t);
std::optional<WeatherCondition> parse_condition(const std::string& s);
const char* condition_name(WeatherCondition c);

struct SegmentGeometry {
  std::string segment_id;
  std::string freeway;
  std::string direction;
  int order_index = 0;
  double miles = 0;
  int speed_limit = 0;
  int lane_count = 0;
  SegmentType segment_type = SegmentType::Basic;
};

struct TrafficObservation {
  int segment = -1;  // index into Corpus::segments
  Instant timestamp = 0;
  double speed = 0;
  double volume = 0;
  double occupancy = 0;
};

struct TrafficBin {
  int segment = -1;
  Instant bin_start = 0;
  double avg_speed = 0, std_speed = 0;
  double avg_volume = 0, std_volume = 0;
  double avg_occupancy = 0, std_occupancy = 0;
  int n_obs = 0;

  double cv_speed() const { return avg_speed > 0 ? std_speed / avg_speed : 0.0; }
  double cv_volume() const { return avg_volume > 0 ? std_volume / avg_volume : 0.0; }
  double cv_occupancy() const {
    return avg_occupancy > 0 ? std_occupancy / avg_occupancy : 0.0;
  }
};

struct CrashRecord {
  std::string crash_id;
  int segment = -1;
  Instant timestamp = 0;
};

struct WeatherRecord {
  int segment = -1;
  Instant timestamp = 0;
  double temperature = 0;  // °F
  double humidity = 0;     // %
  double wind_speed = 0;   // m/s
  double precipitation = 0;  // mm
  double visibility = 0;   // miles
  WeatherCondition condition = WeatherCondition::Clear;
};

struct IngestDiagnostic {
  std::string file;
  std::size_t line = 0;  // physical line in the source file
  std::string message;
};

struct IngestReport {
  std::size_t traffic_accepted = 0, traffic_rejected = 0;
  std::size_t crashes_accepted = 0, crashes_rejected = 0;
  std::size_t weather_accepted = 0, weather_rejected = 0;
  std::vector<IngestDiagnostic> diagnostics;  // truncated at kMaxDiagnostics
  std::size_t diagnostics_total = 0;

  static constexpr std::size_t kMaxDiagnostics = 200;
  void add(const std::string& file, std::size_t line, std::string msg);
};

// Immutable after ingest. Segments sorted by (freeway, direction, order_index);
// upstream of index i is the segment with order_index-1 on the same carriageway.
struct Corpus {
  std::vector<SegmentGeometry> segments;
  std::vector<int> upstream;    // segment index or -1
  std::vector<int> downstream;  // segment index or -1
  std::unordered_map<std::string, int> segment_index;

  std::vector<CrashRecord> crashes;  // sorted by (timestamp, crash_id)
  std::vector<std::vector<WeatherRecord>> weather;  // per segment, time-sorted

  // Raw observations, sorted by (segment, timestamp). May be empty for
  // corpora assembled directly at bin granularity.
  std::vector<TrafficObservation> observations;

  // (segment, bin_start) -> index into bins
  std::vector<TrafficBin> bins;
  std::unordered_map<std::int64_t, int> bin_index;

  Instant t_begin = 0, t_end = 0;  // observation time range (inclusive)

  static std::int64_t bin_key(int segment, Instant bin_start) {
    return static_cast<std::int64_t>(segment) * 100000000000LL +
           (bin_start / kBinSeconds);
  }
  const TrafficBin* find_bin(int segment, Instant bin_start) const {
    auto it = bin_index.find(bin_key(segment, bin_start));
    return it == bin_index.end() ? nullptr : &bins[it->second];
  }
  int find_segment(const std::string& id) const {
    auto it = segment_index.find(id);
    return it == segment_index.end() ? -1 : it->second;
  }
  // Cumulative miles walking upstream from (exclusive) segment `to` down to and
  // including segment `from`; 0 when from == to.
  double upstream_distance_miles(int to, int from) const;
};

// Two-pass mean snapped to a 2^-20 grid and clamped to [min, max] of the
// member values. The snap makes "mean over D identical bin values" exact in
// double arithmetic, which downstream baseline math relies on.
double bin_average(const double* values, std::size_t n);

// Aggregates time-sorted observations of one or more segments into 5-min bins.
// Population statistics (divide by n); averages via bin_average.
std::vector<TrafficBin> aggregate_bins(std::vector<TrafficObservation> obs);

struct SpeedBaseline {
  double mean_speed = 0, std_speed = 0;
  double mean_occupancy = 0, mean_volume = 0;  // imputation profile
  int day_count = 0;
  bool low_confidence = false;  // day_count < 3
};

struct BaselineTable {
  // (segment * kSlotsPerDay + slot) -> baseline; absent slots have day_count 0
  std::vector<SpeedBaseline> slots;
  int segment_count = 0;
  std::vector<int> segments_without_baseline;

  const SpeedBaseline* find(int segment, int slot) const {
    if (segment < 0 || segment >= segment_count) return nullptr;
    const SpeedBaseline& b = slots[segment * kSlotsPerDay + slot];
    return b.day_count > 0 ? &b : nullptr;
  }
};

// Per segment: set of day indices containing a crash within the static
// envelope of that segment (crash at the segment itself or ≤ max_miles
// downstream of it); both the crash day and the day the 2-h tail spills into
// are marked.
using CrashCalendar = std::vector<std::set<std::int64_t>>;

CrashCalendar build_crash_calendar(const Corpus& corpus, double max_miles = 2.0,
                                   Instant tail_seconds = 7200);

BaselineTable build_baseline(const Corpus& corpus, const CrashCalendar& calendar);

// Nearest-in-time record for the segment; ties toward earlier; null when the
// nearest record is farther than max_staleness.
const WeatherRecord* match_weather(const Corpus& corpus, int segment, Instant t,
                                   Instant max_staleness = 3600);

struct CorpusPaths {
  std::string traffic, crashes, weather, geometry;
  static CorpusPaths in_dir(const std::string& dir);
};

Corpus ingest(const CorpusPaths& paths, IngestReport& report);
void export_corpus(const Corpus& corpus, const CorpusPaths& paths);

// Envelope segment walk: [crash segment, then upstream while cumulative miles
// ≤ max_miles], ordered upstream-most first.
std::vector<int> envelope_segments(const Corpus& corpus, int crash_segment,
                                   double max_miles = 2.0);

}  // namespace scp
