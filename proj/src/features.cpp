#include "scp/features.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace scp {
namespace {

const std::vector<std::string> kStats = {
    "Avg_Speed",  "Avg_Occupancy", "Avg_Volume",
    "Std_Speed",  "Std_Occupancy", "Std_Volume",
    "Cv_Speed",   "Cv_Volume",     "Cv_Occupancy"};
const std::vector<std::string> kPositions = {"up", "center", "down"};
const std::vector<std::string> kWeatherNames = {
    "Temperature", "Humidity",        "Wind_Speed",
    "Precipitation", "Visibility",    "Condition_Clear",
    "Condition_Rain"};
const std::vector<std::string> kGeometryStats = {
    "Speed_Limit",    "Lane_Count",      "Miles",
    "Segment_Basic",  "Segment_Weaving", "Segment_Merge",
    "Segment_Diverge"};

std::shared_ptr<const FeatureSchema> build_schema(int window_count,
                                                  bool pc_layout) {
  auto schema = std::make_shared<FeatureSchema>();
  schema->window_count = window_count;
  schema->pc_layout = pc_layout;
  for (int w = 1; w <= window_count; ++w)
    for (const auto& pos : kPositions)
      for (const auto& stat : kStats)
        schema->names.push_back(stat + "_" + std::to_string(w) + "_" + pos);
  for (const auto& n : kWeatherNames) schema->names.push_back(n);
  const std::vector<std::string> geo_pos =
      pc_layout ? std::vector<std::string>{"crash", "up", "down"}
                : std::vector<std::string>{"center", "up", "down"};
  for (const auto& pos : geo_pos)
    for (const auto& g : kGeometryStats)
      schema->names.push_back(g + "_" + pos);
  return schema;
}

}  // namespace

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::PC: return "PC";
    case ModelKind::SC1: return "SC1";
    case ModelKind::SC2: return "SC2";
  }
  return "PC";
}

std::optional<ModelKind> parse_model_kind(const std::string& s) {
  if (s == "PC") return ModelKind::PC;
  if (s == "SC1") return ModelKind::SC1;
  if (s == "SC2") return ModelKind::SC2;
  return std::nullopt;
}

int FeatureSchema::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

std::shared_ptr<const FeatureSchema> st_schema(int window_count) {
  return build_schema(window_count, false);
}

std::shared_ptr<const FeatureSchema> pc_schema() {
  return build_schema(1, true);
}

std::optional<TrafficFeatureName> parse_traffic_feature(
    const std::string& name) {
  for (const auto& stat : kStats) {
    if (name.size() <= stat.size() + 2 || name.compare(0, stat.size(), stat))
      continue;
    if (name[stat.size()] != '_') continue;
    const auto rest = name.substr(stat.size() + 1);
    auto us = rest.find('_');
    if (us == std::string::npos) continue;
    const std::string ws = rest.substr(0, us);
    const std::string pos = rest.substr(us + 1);
    if (std::find(kPositions.begin(), kPositions.end(), pos) ==
        kPositions.end())
      continue;
    int w = 0;
    for (char c : ws) {
      if (c < '0' || c > '9') return std::nullopt;
      w = w * 10 + (c - '0');
    }
    if (w < 1 || ws.empty()) return std::nullopt;
    return TrafficFeatureName{stat, w, pos};
  }
  return std::nullopt;
}

FeatureGroup feature_group(const std::string& name) {
  if (parse_traffic_feature(name)) return FeatureGroup::Traffic;
  for (const auto& w : kWeatherNames)
    if (name == w) return FeatureGroup::Weather;
  return FeatureGroup::Geometry;
}

std::vector<int> window_centers(const Corpus& corpus, int sc_segment,
                                int pc_segment, int window_count) {
  if (window_count < 1) throw std::invalid_argument("window_count must be >= 1");
  // pc must be downstream-of-or-equal to sc on the same carriageway
  int hops = -1;
  for (int s = pc_segment, h = 0; s != -1; s = corpus.upstream[s], ++h)
    if (s == sc_segment) {
      hops = h;
      break;
    }
  if (hops < 0)
    throw std::invalid_argument(
        "pc_segment is not downstream-or-equal of sc_segment");
  std::vector<int> centers;
  int cur = sc_segment;
  for (int w = 1; w <= window_count; ++w) {
    centers.push_back(cur);
    if (cur != pc_segment && corpus.downstream[cur] != -1)
      cur = corpus.downstream[cur];
  }
  return centers;
}

DynamicWindowSpec make_window_spec(const Corpus& corpus, Instant reference_time,
                                   int sc_segment, int pc_segment,
                                   int window_count) {
  DynamicWindowSpec spec;
  spec.reference_time = reference_time;
  spec.sc_segment = sc_segment;
  spec.pc_segment = pc_segment;
  spec.window_count = window_count;
  spec.centers = window_centers(corpus, sc_segment, pc_segment, window_count);
  return spec;
}

Instant window_bin_start(Instant reference_time, int w) {
  const Instant target = reference_time - static_cast<Instant>(w + 1) * 300;
  // floor division toward -inf (timestamps are non-negative in practice)
  Instant q = target / 300;
  if (target % 300 < 0) --q;
  return q * 300;
}

namespace {

struct CellStats {
  double v[9];  // matches kStats order
  bool imputed = false;
};

CellStats cell_stats(const Corpus& corpus, const BaselineTable& baselines,
                     int segment, Instant bin_start) {
  CellStats out{};
  const TrafficBin* bin = corpus.find_bin(segment, bin_start);
  if (bin) {
    out.v[0] = bin->avg_speed;
    out.v[1] = bin->avg_occupancy;
    out.v[2] = bin->avg_volume;
    out.v[3] = bin->std_speed;
    out.v[4] = bin->std_occupancy;
    out.v[5] = bin->std_volume;
    out.v[6] = bin->cv_speed();
    out.v[7] = bin->cv_volume();
    out.v[8] = bin->cv_occupancy();
    return out;
  }
  out.imputed = true;
  const SpeedBaseline* base =
      baselines.find(segment, slot_of_day(bin_start));
  if (base) {
    out.v[0] = base->mean_speed;
    out.v[1] = base->mean_occupancy;
    out.v[2] = base->mean_volume;
  }
  // stds and cvs stay 0 under imputation
  return out;
}

void append_weather(const Corpus& corpus, int segment, Instant t,
                    FeatureVector& out) {
  const WeatherRecord* w = match_weather(corpus, segment, t);
  if (!w) {
    out.missing_weather = true;
    for (std::size_t i = 0; i < kWeatherNames.size(); ++i)
      out.values.push_back(0);
    return;
  }
  out.values.push_back(w->temperature);
  out.values.push_back(w->humidity);
  out.values.push_back(w->wind_speed);
  out.values.push_back(w->precipitation);
  out.values.push_back(w->visibility);
  out.values.push_back(w->condition == WeatherCondition::Clear ? 1.0 : 0.0);
  out.values.push_back(w->condition == WeatherCondition::Rain ? 1.0 : 0.0);
}

void append_geometry(const Corpus& corpus, int segment, FeatureVector& out) {
  const SegmentGeometry& g = corpus.segments[segment];
  out.values.push_back(g.speed_limit);
  out.values.push_back(g.lane_count);
  out.values.push_back(g.miles);
  out.values.push_back(g.segment_type == SegmentType::Basic ? 1.0 : 0.0);
  out.values.push_back(g.segment_type == SegmentType::Weaving ? 1.0 : 0.0);
  out.values.push_back(g.segment_type == SegmentType::Merge ? 1.0 : 0.0);
  out.values.push_back(g.segment_type == SegmentType::Diverge ? 1.0 : 0.0);
}

ExtractResult extract_cells(const Corpus& corpus,
                            const BaselineTable& baselines,
                            const std::vector<int>& centers, Instant ref,
                            int geo_segment,
                            std::shared_ptr<const FeatureSchema> schema) {
  ExtractResult result;
  result.vec.schema = schema;
  const int W = static_cast<int>(centers.size());
  int missing = 0;
  for (int w = 1; w <= W; ++w) {
    const Instant bin = window_bin_start(ref, w);
    const int center = centers[w - 1];
    const int segs[3] = {corpus.upstream[center] != -1
                             ? corpus.upstream[center]
                             : center,
                         center,
                         corpus.downstream[center] != -1
                             ? corpus.downstream[center]
                             : center};
    if (corpus.upstream[center] == -1) ++result.vec.boundary_positions;
    if (corpus.downstream[center] == -1) ++result.vec.boundary_positions;
    for (int p = 0; p < 3; ++p) {
      CellStats cs = cell_stats(corpus, baselines, segs[p], bin);
      if (cs.imputed) {
        ++result.vec.imputed_cells;
        ++missing;
      }
      for (double v : cs.v) result.vec.values.push_back(v);
    }
  }
  const int total_cells = W * 3;
  if (missing * 2 > total_cells) {
    result.reason = "rejected: " + std::to_string(missing) + "/" +
                    std::to_string(total_cells) + " window cells missing";
    return result;
  }
  append_weather(corpus, geo_segment, window_bin_start(ref, 1), result.vec);
  const int up = corpus.upstream[geo_segment] != -1
                     ? corpus.upstream[geo_segment]
                     : geo_segment;
  const int down = corpus.downstream[geo_segment] != -1
                       ? corpus.downstream[geo_segment]
                       : geo_segment;
  append_geometry(corpus, geo_segment, result.vec);
  append_geometry(corpus, up, result.vec);
  append_geometry(corpus, down, result.vec);
  result.ok = true;
  return result;
}

}  // namespace

BaseFeatureRow base_features(const Corpus& corpus, int segment,
                             Instant bin_start) {
  BaseFeatureRow row;
  const TrafficBin* bin = corpus.find_bin(segment, bin_start);
  if (!bin) throw std::runtime_error("base_features: bin absent");
  const char* traffic_names[] = {"Avg_Speed",  "Avg_Occupancy", "Avg_Volume",
                                 "Std_Speed",  "Std_Occupancy", "Std_Volume",
                                 "Cv_Speed",   "Cv_Volume"};
  const double traffic_vals[] = {
      bin->avg_speed,     bin->avg_occupancy, bin->avg_volume,
      bin->std_speed,     bin->std_occupancy, bin->std_volume,
      bin->cv_speed(),    bin->cv_volume()};
  for (int i = 0; i < 8; ++i) {
    row.names.push_back(traffic_names[i]);
    row.values.push_back(traffic_vals[i]);
  }
  const WeatherRecord* w = match_weather(corpus, segment, bin_start);
  const double weather_vals[] = {
      w ? w->temperature : 0,   w ? w->humidity : 0,
      w ? w->wind_speed : 0,    w ? w->precipitation : 0,
      w ? w->visibility : 0,
      w && w->condition == WeatherCondition::Clear ? 1.0 : 0.0,
      w && w->condition == WeatherCondition::Rain ? 1.0 : 0.0};
  for (std::size_t i = 0; i < kWeatherNames.size(); ++i) {
    row.names.push_back(kWeatherNames[i]);
    row.values.push_back(weather_vals[i]);
  }
  const SegmentGeometry& g = corpus.segments[segment];
  const double geo_vals[] = {
      static_cast<double>(g.speed_limit),
      static_cast<double>(g.lane_count),
      g.miles,
      g.segment_type == SegmentType::Basic ? 1.0 : 0.0,
      g.segment_type == SegmentType::Weaving ? 1.0 : 0.0,
      g.segment_type == SegmentType::Merge ? 1.0 : 0.0,
      g.segment_type == SegmentType::Diverge ? 1.0 : 0.0};
  for (std::size_t i = 0; i < kGeometryStats.size(); ++i) {
    row.names.push_back(kGeometryStats[i]);
    row.values.push_back(geo_vals[i]);
  }
  return row;
}

ExtractResult extract_st_vector(const Corpus& corpus,
                                const BaselineTable& baselines,
                                const DynamicWindowSpec& spec) {
  return extract_cells(corpus, baselines, spec.centers, spec.reference_time,
                       spec.sc_segment, st_schema(spec.window_count));
}

ExtractResult extract_pc_vector(const Corpus& corpus,
                                const BaselineTable& baselines,
                                const CrashRecord& crash) {
  std::vector<int> centers{crash.segment};
  return extract_cells(corpus, baselines, centers, crash.timestamp,
                       crash.segment, pc_schema());
}

}  // namespace scp
