#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scp/corpus.hpp"

namespace scp {

enum class ModelKind { PC, SC1, SC2 };
const char* model_kind_name(ModelKind k);
std::optional<ModelKind> parse_model_kind(const std::string& s);

// Canonical feature naming. Traffic follows "<Stat>_<w>_<pos>"; weather and
// geometry blocks use fixed names (geometry suffixed per position).
struct FeatureSchema {
  std::vector<std::string> names;
  int window_count = 0;       // W for ST schemas, 1 for PC
  bool pc_layout = false;     // geometry positions crash/up/down vs center/up/down

  int index_of(const std::string& name) const;
  std::size_t size() const { return names.size(); }
};

std::shared_ptr<const FeatureSchema> st_schema(int window_count);
std::shared_ptr<const FeatureSchema> pc_schema();

// Parses "<Stat>_<w>_<pos>" traffic names; nullopt for weather/geometry names.
struct TrafficFeatureName {
  std::string stat;
  int window = 0;
  std::string pos;
};
std::optional<TrafficFeatureName> parse_traffic_feature(const std::string& name);

enum class FeatureGroup { Traffic, Weather, Geometry };
FeatureGroup feature_group(const std::string& name);

struct DynamicWindowSpec {
  Instant reference_time = 0;
  int sc_segment = -1;
  int pc_segment = -1;
  int window_count = 4;
  std::vector<int> centers;  // centers[w-1] for w = 1..W
};

// Centers start at sc and advance one segment downstream per window, clamped
// at pc. Throws when pc is not downstream-or-equal of sc on one carriageway.
std::vector<int> window_centers(const Corpus& corpus, int sc_segment,
                                int pc_segment, int window_count);

DynamicWindowSpec make_window_spec(const Corpus& corpus, Instant reference_time,
                                   int sc_segment, int pc_segment,
                                   int window_count);

// Start of the aligned 5-min bin for window w: the latest complete bin whose
// end is >= 5*w minutes before the reference.
Instant window_bin_start(Instant reference_time, int w);

struct FeatureVector {
  std::shared_ptr<const FeatureSchema> schema;
  std::vector<double> values;
  int imputed_cells = 0;     // traffic cells filled from baseline
  int boundary_positions = 0;  // neighbor positions copied from center
  bool missing_weather = false;
};

struct ExtractResult {
  bool ok = false;
  FeatureVector vec;
  std::string reason;  // set when !ok
};

// 22-variable base row (8 traffic + 7 weather + 7 geometry) for one cell.
struct BaseFeatureRow {
  std::vector<std::string> names;
  std::vector<double> values;
};
BaseFeatureRow base_features(const Corpus& corpus, int segment,
                             Instant bin_start);

ExtractResult extract_st_vector(const Corpus& corpus,
                                const BaselineTable& baselines,
                                const DynamicWindowSpec& spec);

ExtractResult extract_pc_vector(const Corpus& corpus,
                                const BaselineTable& baselines,
                                const CrashRecord& crash);

}  // namespace scp
