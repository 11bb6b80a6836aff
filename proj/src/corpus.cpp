#include "scp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "scp/csv.hpp"

namespace scp {

std::optional<SegmentType> parse_segment_type(const std::string& s) {
  if (s == "Basic") return SegmentType::Basic;
  if (s == "Weaving") return SegmentType::Weaving;
  if (s == "Merge") return SegmentType::Merge;
  if (s == "Diverge") return SegmentType::Diverge;
  return std::nullopt;
}

const char* segment_type_name(SegmentType t) {
  switch (t) {
    case SegmentType::Basic: return "Basic";
    case SegmentType::Weaving: return "Weaving";
    case SegmentType::Merge: return "Merge";
    case SegmentType::Diverge: return "Diverge";
  }
  return "Basic";
}

std::optional<WeatherCondition> parse_condition(const std::string& s) {
  if (s == "Clear") return WeatherCondition::Clear;
  if (s == "Rain") return WeatherCondition::Rain;
  if (s == "Other") return WeatherCondition::Other;
  return std::nullopt;
}

const char* condition_name(WeatherCondition c) {
  switch (c) {
    case WeatherCondition::Clear: return "Clear";
    case WeatherCondition::Rain: return "Rain";
    case WeatherCondition::Other: return "Other";
  }
  return "Clear";
}

void IngestReport::add(const std::string& file, std::size_t line,
                       std::string msg) {
  ++diagnostics_total;
  if (diagnostics.size() < kMaxDiagnostics)
    diagnostics.push_back({file, line, std::move(msg)});
}

double Corpus::upstream_distance_miles(int to, int from) const {
  if (to == from) return 0.0;
  double d = 0;
  int s = upstream[to];
  while (s != -1) {
    d += segments[s].miles;
    if (s == from) return d;
    s = upstream[s];
  }
  return -1.0;  // not upstream on the same carriageway
}

double bin_average(const double* values, std::size_t n) {
  double sum = 0, lo = values[0], hi = values[0];
  for (std::size_t i = 0; i < n; ++i) {
    sum += values[i];
    lo = std::min(lo, values[i]);
    hi = std::max(hi, values[i]);
  }
  constexpr double kGrid = 1048576.0;  // 2^20
  double avg = std::nearbyint((sum / n) * kGrid) / kGrid;
  return std::clamp(avg, lo, hi);
}

std::vector<TrafficBin> aggregate_bins(std::vector<TrafficObservation> obs) {
  std::sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) {
    if (a.segment != b.segment) return a.segment < b.segment;
    return a.timestamp < b.timestamp;
  });
  std::vector<TrafficBin> out;
  std::vector<double> vs, vv, vo;
  std::size_t i = 0;
  while (i < obs.size()) {
    const int seg = obs[i].segment;
    const Instant bin = bin_start_of(obs[i].timestamp);
    std::size_t j = i;
    while (j < obs.size() && obs[j].segment == seg &&
           bin_start_of(obs[j].timestamp) == bin)
      ++j;
    const std::size_t n = j - i;
    vs.clear();
    vv.clear();
    vo.clear();
    for (std::size_t k = i; k < j; ++k) {
      vs.push_back(obs[k].speed);
      vv.push_back(obs[k].volume);
      vo.push_back(obs[k].occupancy);
    }
    TrafficBin b;
    b.segment = seg;
    b.bin_start = bin;
    b.n_obs = static_cast<int>(n);
    b.avg_speed = bin_average(vs.data(), n);
    b.avg_volume = bin_average(vv.data(), n);
    b.avg_occupancy = bin_average(vo.data(), n);
    double ds = 0, dv = 0, dob = 0;
    for (std::size_t k = i; k < j; ++k) {
      ds += (obs[k].speed - b.avg_speed) * (obs[k].speed - b.avg_speed);
      dv += (obs[k].volume - b.avg_volume) * (obs[k].volume - b.avg_volume);
      dob += (obs[k].occupancy - b.avg_occupancy) *
             (obs[k].occupancy - b.avg_occupancy);
    }
    b.std_speed = std::sqrt(ds / n);
    b.std_volume = std::sqrt(dv / n);
    b.std_occupancy = std::sqrt(dob / n);
    out.push_back(b);
    i = j;
  }
  return out;
}

std::vector<int> envelope_segments(const Corpus& corpus, int crash_segment,
                                   double max_miles) {
  std::vector<int> segs{crash_segment};
  double cum = 0;
  int s = corpus.upstream[crash_segment];
  while (s != -1) {
    cum += corpus.segments[s].miles;
    if (cum > max_miles + 1e-9) break;
    segs.push_back(s);
    s = corpus.upstream[s];
  }
  std::reverse(segs.begin(), segs.end());  // upstream-most first
  return segs;
}

CrashCalendar build_crash_calendar(const Corpus& corpus, double max_miles,
                                   Instant tail_seconds) {
  CrashCalendar cal(corpus.segments.size());
  for (const auto& crash : corpus.crashes) {
    for (int seg : envelope_segments(corpus, crash.segment, max_miles)) {
      cal[seg].insert(day_index(crash.timestamp));
      cal[seg].insert(day_index(crash.timestamp + tail_seconds));
    }
  }
  return cal;
}

BaselineTable build_baseline(const Corpus& corpus,
                             const CrashCalendar& calendar) {
  BaselineTable table;
  table.segment_count = static_cast<int>(corpus.segments.size());
  table.slots.resize(corpus.segments.size() * kSlotsPerDay);

  // Per (segment, slot): collect per-bin values over crash-free days, in
  // chronological order (bins are stored sorted by segment then time).
  struct Acc {
    std::vector<double> speeds, occs, vols;
  };
  std::vector<Acc> accs(corpus.segments.size() * kSlotsPerDay);
  for (const auto& b : corpus.bins) {
    const auto day = day_index(b.bin_start);
    if (calendar[b.segment].count(day)) continue;
    Acc& a = accs[b.segment * kSlotsPerDay + slot_of_day(b.bin_start)];
    a.speeds.push_back(b.avg_speed);
    a.occs.push_back(b.avg_occupancy);
    a.vols.push_back(b.avg_volume);
  }
  std::vector<bool> has_any(corpus.segments.size(), false);
  for (std::size_t idx = 0; idx < accs.size(); ++idx) {
    const Acc& a = accs[idx];
    if (a.speeds.empty()) continue;
    has_any[idx / kSlotsPerDay] = true;
    SpeedBaseline& b = table.slots[idx];
    const std::size_t n = a.speeds.size();
    double sum = 0, sumo = 0, sumv = 0;
    for (std::size_t k = 0; k < n; ++k) {
      sum += a.speeds[k];
      sumo += a.occs[k];
      sumv += a.vols[k];
    }
    b.mean_speed = sum / n;
    b.mean_occupancy = sumo / n;
    b.mean_volume = sumv / n;
    double dev = 0;
    for (double v : a.speeds) dev += (v - b.mean_speed) * (v - b.mean_speed);
    b.std_speed = std::sqrt(dev / n);
    b.day_count = static_cast<int>(n);
    b.low_confidence = n < 3;
  }
  for (std::size_t s = 0; s < has_any.size(); ++s)
    if (!has_any[s])
      table.segments_without_baseline.push_back(static_cast<int>(s));
  return table;
}

const WeatherRecord* match_weather(const Corpus& corpus, int segment, Instant t,
                                   Instant max_staleness) {
  const auto& recs = corpus.weather[segment];
  if (recs.empty()) return nullptr;
  auto it = std::lower_bound(
      recs.begin(), recs.end(), t,
      [](const WeatherRecord& r, Instant x) { return r.timestamp < x; });
  const WeatherRecord* best = nullptr;
  Instant best_dist = 0;
  auto consider = [&](const WeatherRecord* r) {
    if (!r) return;
    Instant d = std::llabs(r->timestamp - t);
    if (!best || d < best_dist ||
        (d == best_dist && r->timestamp < best->timestamp)) {
      best = r;
      best_dist = d;
    }
  };
  if (it != recs.end()) consider(&*it);
  if (it != recs.begin()) consider(&*(it - 1));
  if (best && best_dist > max_staleness) return nullptr;
  return best;
}

CorpusPaths CorpusPaths::in_dir(const std::string& dir) {
  auto join = [&](const char* name) {
    if (dir.empty() || dir.back() == '/') return dir + name;
    return dir + "/" + name;
  };
  return {join("traffic.csv"), join("crashes.csv"), join("weather.csv"),
          join("geometry.csv")};
}

namespace {

const std::vector<std::string> kTrafficHeader = {
    "segment_id", "timestamp_utc", "speed_mph", "volume_veh_per_30s",
    "occupancy_pct"};
const std::vector<std::string> kCrashHeader = {
    "crash_id", "segment_id", "timestamp_utc", "freeway", "direction"};
const std::vector<std::string> kWeatherHeader = {
    "segment_id", "timestamp_utc", "temp_f",        "humidity_pct",
    "wind_mps",   "precip_mm",     "visibility_mi", "condition"};
const std::vector<std::string> kGeometryHeader = {
    "segment_id", "freeway",     "direction",  "order_index",
    "miles",      "speed_limit", "lane_count", "segment_type"};

void load_geometry(const std::string& path, Corpus& corpus) {
  CsvTable t = read_csv(path, kGeometryHeader);
  std::set<std::tuple<std::string, std::string, int>> seen_order;
  for (const auto& row : t.rows) {
    std::ostringstream where;
    where << path << ":" << row.line;
    if (row.fields.size() != kGeometryHeader.size())
      throw std::runtime_error(where.str() + ": wrong field count");
    SegmentGeometry g;
    g.segment_id = row.fields[0];
    g.freeway = row.fields[1];
    g.direction = row.fields[2];
    auto order = parse_i64(row.fields[3]);
    auto miles = parse_double(row.fields[4]);
    auto limit = parse_i64(row.fields[5]);
    auto lanes = parse_i64(row.fields[6]);
    auto type = parse_segment_type(row.fields[7]);
    if (!order || !miles || !limit || !lanes || !type)
      throw std::runtime_error(where.str() + ": malformed geometry row");
    g.order_index = static_cast<int>(*order);
    g.miles = *miles;
    g.speed_limit = static_cast<int>(*limit);
    g.lane_count = static_cast<int>(*lanes);
    g.segment_type = *type;
    if (!(g.miles > 0))
      throw std::runtime_error(where.str() + ": miles must be > 0");
    if (g.speed_limit != 60 && g.speed_limit != 65 && g.speed_limit != 70)
      throw std::runtime_error(where.str() + ": speed_limit must be 60/65/70");
    if (g.lane_count < 2 || g.lane_count > 6)
      throw std::runtime_error(where.str() + ": lane_count out of [2,6]");
    if (corpus.segment_index.count(g.segment_id))
      throw std::runtime_error(where.str() + ": duplicate segment_id " +
                               g.segment_id);
    if (!seen_order.insert({g.freeway, g.direction, g.order_index}).second)
      throw std::runtime_error(where.str() + ": duplicate order_index " +
                               std::to_string(g.order_index) + " on " +
                               g.freeway + "/" + g.direction);
    corpus.segment_index[g.segment_id] = -1;  // placeholder, re-filled below
    corpus.segments.push_back(g);
  }
  if (corpus.segments.empty())
    throw std::runtime_error(path + ": no segments");
  std::sort(corpus.segments.begin(), corpus.segments.end(),
            [](const SegmentGeometry& a, const SegmentGeometry& b) {
              return std::tie(a.freeway, a.direction, a.order_index) <
                     std::tie(b.freeway, b.direction, b.order_index);
            });
  corpus.segment_index.clear();
  for (std::size_t i = 0; i < corpus.segments.size(); ++i)
    corpus.segment_index[corpus.segments[i].segment_id] =
        static_cast<int>(i);
  corpus.upstream.assign(corpus.segments.size(), -1);
  corpus.downstream.assign(corpus.segments.size(), -1);
  for (std::size_t i = 1; i < corpus.segments.size(); ++i) {
    const auto& prev = corpus.segments[i - 1];
    const auto& cur = corpus.segments[i];
    if (prev.freeway == cur.freeway && prev.direction == cur.direction &&
        prev.order_index + 1 == cur.order_index) {
      corpus.upstream[i] = static_cast<int>(i - 1);
      corpus.downstream[i - 1] = static_cast<int>(i);
    }
  }
}

}  // namespace

Corpus ingest(const CorpusPaths& paths, IngestReport& report) {
  Corpus corpus;
  load_geometry(paths.geometry, corpus);

  // Traffic.
  std::vector<TrafficObservation> obs;
  {
    CsvTable t = read_csv(paths.traffic, kTrafficHeader);
    std::set<std::pair<int, Instant>> seen;
    obs.reserve(t.rows.size());
    for (const auto& row : t.rows) {
      if (row.fields.size() != kTrafficHeader.size()) {
        report.add(paths.traffic, row.line, "wrong field count");
        ++report.traffic_rejected;
        continue;
      }
      TrafficObservation o;
      o.segment = corpus.find_segment(row.fields[0]);
      if (o.segment < 0) {
        report.add(paths.traffic, row.line,
                   "unknown segment_id " + row.fields[0]);
        ++report.traffic_rejected;
        continue;
      }
      auto ts = parse_rfc3339(row.fields[1]);
      auto speed = parse_double(row.fields[2]);
      auto volume = parse_double(row.fields[3]);
      auto occ = parse_double(row.fields[4]);
      if (!ts) {
        report.add(paths.traffic, row.line,
                   "malformed timestamp " + row.fields[1]);
        ++report.traffic_rejected;
        continue;
      }
      if (!speed || !std::isfinite(*speed) || *speed < 0) {
        report.add(paths.traffic, row.line, "bad speed");
        ++report.traffic_rejected;
        continue;
      }
      if (!volume || !std::isfinite(*volume) || *volume < 0) {
        report.add(paths.traffic, row.line, "bad volume");
        ++report.traffic_rejected;
        continue;
      }
      if (!occ || !std::isfinite(*occ) || *occ < 0 || *occ > 100) {
        report.add(paths.traffic, row.line, "occupancy out of [0,100]");
        ++report.traffic_rejected;
        continue;
      }
      o.timestamp = *ts;
      o.speed = *speed;
      o.volume = *volume;
      o.occupancy = *occ;
      if (!seen.insert({o.segment, o.timestamp}).second) {
        report.add(paths.traffic, row.line,
                   "duplicate (segment, timestamp) observation");
        ++report.traffic_rejected;
        continue;
      }
      obs.push_back(o);
      ++report.traffic_accepted;
    }
  }
  if (!obs.empty()) {
    corpus.t_begin = obs[0].timestamp;
    corpus.t_end = obs[0].timestamp;
    for (const auto& o : obs) {
      corpus.t_begin = std::min(corpus.t_begin, o.timestamp);
      corpus.t_end = std::max(corpus.t_end, o.timestamp);
    }
  }
  std::sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) {
    if (a.segment != b.segment) return a.segment < b.segment;
    return a.timestamp < b.timestamp;
  });
  corpus.observations = obs;
  corpus.bins = aggregate_bins(std::move(obs));
  corpus.bin_index.reserve(corpus.bins.size() * 2);
  for (std::size_t i = 0; i < corpus.bins.size(); ++i)
    corpus.bin_index[Corpus::bin_key(corpus.bins[i].segment,
                                     corpus.bins[i].bin_start)] =
        static_cast<int>(i);

  // Crashes.
  {
    CsvTable t = read_csv(paths.crashes, kCrashHeader);
    std::set<std::string> ids;
    for (const auto& row : t.rows) {
      if (row.fields.size() != kCrashHeader.size()) {
        report.add(paths.crashes, row.line, "wrong field count");
        ++report.crashes_rejected;
        continue;
      }
      CrashRecord c;
      c.crash_id = row.fields[0];
      c.segment = corpus.find_segment(row.fields[1]);
      auto ts = parse_rfc3339(row.fields[2]);
      if (c.crash_id.empty() || !ids.insert(c.crash_id).second) {
        report.add(paths.crashes, row.line, "missing or duplicate crash_id");
        ++report.crashes_rejected;
        continue;
      }
      if (c.segment < 0) {
        report.add(paths.crashes, row.line,
                   "unknown segment_id " + row.fields[1]);
        ++report.crashes_rejected;
        continue;
      }
      if (!ts) {
        report.add(paths.crashes, row.line,
                   "malformed timestamp " + row.fields[2]);
        ++report.crashes_rejected;
        continue;
      }
      c.timestamp = *ts;
      const auto& g = corpus.segments[c.segment];
      if (row.fields[3] != g.freeway || row.fields[4] != g.direction) {
        report.add(paths.crashes, row.line,
                   "freeway/direction does not match geometry");
        ++report.crashes_rejected;
        continue;
      }
      if (corpus.t_end > corpus.t_begin &&
          (c.timestamp < corpus.t_begin || c.timestamp > corpus.t_end)) {
        report.add(paths.crashes, row.line, "timestamp outside corpus range");
        ++report.crashes_rejected;
        continue;
      }
      corpus.crashes.push_back(c);
      ++report.crashes_accepted;
    }
    std::sort(corpus.crashes.begin(), corpus.crashes.end(),
              [](const CrashRecord& a, const CrashRecord& b) {
                return std::tie(a.timestamp, a.crash_id) <
                       std::tie(b.timestamp, b.crash_id);
              });
  }

  // Weather.
  corpus.weather.assign(corpus.segments.size(), {});
  {
    CsvTable t = read_csv(paths.weather, kWeatherHeader);
    for (const auto& row : t.rows) {
      if (row.fields.size() != kWeatherHeader.size()) {
        report.add(paths.weather, row.line, "wrong field count");
        ++report.weather_rejected;
        continue;
      }
      WeatherRecord w;
      w.segment = corpus.find_segment(row.fields[0]);
      auto ts = parse_rfc3339(row.fields[1]);
      auto temp = parse_double(row.fields[2]);
      auto hum = parse_double(row.fields[3]);
      auto wind = parse_double(row.fields[4]);
      auto precip = parse_double(row.fields[5]);
      auto vis = parse_double(row.fields[6]);
      auto cond = parse_condition(row.fields[7]);
      if (w.segment < 0 || !ts || !temp || !hum || !wind || !precip || !vis ||
          !cond) {
        report.add(paths.weather, row.line, "malformed weather row");
        ++report.weather_rejected;
        continue;
      }
      if (*hum < 0 || *hum > 100 || *vis < 0) {
        report.add(paths.weather, row.line, "humidity/visibility out of range");
        ++report.weather_rejected;
        continue;
      }
      w.timestamp = *ts;
      w.temperature = *temp;
      w.humidity = *hum;
      w.wind_speed = *wind;
      w.precipitation = *precip;
      w.visibility = *vis;
      w.condition = *cond;
      corpus.weather[w.segment].push_back(w);
      ++report.weather_accepted;
    }
    for (auto& v : corpus.weather)
      std::sort(v.begin(), v.end(),
                [](const WeatherRecord& a, const WeatherRecord& b) {
                  return a.timestamp < b.timestamp;
                });
  }
  return corpus;
}

void export_corpus(const Corpus& corpus, const CorpusPaths& paths) {
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& g : corpus.segments)
      rows.push_back({g.segment_id, g.freeway, g.direction,
                      std::to_string(g.order_index), format_double(g.miles),
                      std::to_string(g.speed_limit),
                      std::to_string(g.lane_count),
                      segment_type_name(g.segment_type)});
    write_csv(paths.geometry, kGeometryHeader, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (const auto& c : corpus.crashes) {
      const auto& g = corpus.segments[c.segment];
      rows.push_back({c.crash_id, g.segment_id, format_rfc3339(c.timestamp),
                      g.freeway, g.direction});
    }
    write_csv(paths.crashes, kCrashHeader, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t s = 0; s < corpus.weather.size(); ++s)
      for (const auto& w : corpus.weather[s])
        rows.push_back({corpus.segments[s].segment_id,
                        format_rfc3339(w.timestamp), format_double(w.temperature),
                        format_double(w.humidity), format_double(w.wind_speed),
                        format_double(w.precipitation),
                        format_double(w.visibility),
                        condition_name(w.condition)});
    write_csv(paths.weather, kWeatherHeader, rows);
  }
  {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(corpus.observations.size());
    for (const auto& o : corpus.observations)
      rows.push_back({corpus.segments[o.segment].segment_id,
                      format_rfc3339(o.timestamp), format_double(o.speed),
                      format_double(o.volume), format_double(o.occupancy)});
    write_csv(paths.traffic, kTrafficHeader, rows);
  }
}

}  // namespace scp
