#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scp/contour.hpp"
#include "scp/corpus.hpp"

namespace scp {

struct ScenarioConfig {
  int segment_count = 30;
  double segment_miles = 0.4;
  int freeway_count = 1;
  int days = 45;

  // Diurnal profile: free-flow speed minus a peak-hour dip, trapezoid ramps.
  double free_flow_mph = 65.0;
  double peak_dip_mph = 12.0;
  int am_peak_start = 7, am_peak_end = 9;
  int pm_peak_start = 16, pm_peak_end = 18;
  double ramp_minutes = 30.0;

  double noise_std_mph = 3.0;

  double crash_rate_per_day = 5.0;  // background crashes per freeway-day
  double peak_crash_fraction = 0.55;

  // Congestion wedge physics.
  double wave_speed_mph = 12.0;
  double congestion_depth_mph = 25.0;
  double clearance_minutes = 45.0;
  double recovery_minutes = 15.0;
  double depth_range_miles = 1.8;
  // Peak-hour crashes clear slower (responders fight the same congestion):
  // wedge duration scales by 1 + factor * peak_fraction, capped at the 2 h
  // envelope.
  double peak_clearance_factor = 1.0;

  // Secondary injection: per congested cell-minute, P(spawn) =
  // secondary_hazard * (drop / congestion_depth) * rain multiplier.
  double secondary_hazard = 0.0030;
  double rain_hazard_multiplier = 1.0;
  double rain_day_probability = 0.0;

  std::uint64_t seed = 42;

  // Observation cadence (seconds) and weather cadence (minutes).
  int obs_interval_s = 30;
  int weather_interval_min = 15;
};

ScenarioConfig parse_scenario_file(const std::string& path);
ScenarioConfig apply_scenario_overrides(
    ScenarioConfig base, const std::map<std::string, std::string>& kv);

struct TruthCrash {
  std::string crash_id;
  int segment = -1;
  Instant timestamp = 0;
  CrashClass role = CrashClass::Normal;
  std::string parent_id;  // secondaries only
  // planted descriptors (secondaries only)
  double spawn_drop_frac = 0;   // drop/depth at the spawn cell-minute
  int minutes_since_parent = 0;
  bool raining = false;
};

struct GroundTruth {
  std::vector<TruthCrash> crashes;  // time-sorted, same ids as the corpus
  // True impact-cell set per crash id: bin-level cells where the crash's own
  // wedge depresses the expected speed.
  std::map<std::string, std::vector<std::pair<int, Instant>>> true_cells;
  std::size_t n_primary = 0, n_secondary = 0, n_normal = 0;
};

struct SynthResult {
  Corpus corpus;
  GroundTruth truth;
  std::vector<std::string> warnings;
};

// Deterministic under config.seed. When out_dir is set, the four corpus CSVs
// and ground_truth.json are written there (traffic.csv streamed during
// generation). keep_observations controls whether raw observations stay on the
// returned corpus (needed only for export_corpus round-trips).
SynthResult generate_corpus(const ScenarioConfig& config,
                            const std::optional<std::string>& out_dir = {},
                            bool keep_observations = false);

void write_ground_truth_json(const std::string& path, const GroundTruth& truth,
                             const Corpus& corpus);

struct OracleComparison {
  double pair_recall = 0;      // true pairs recovered exactly
  double pair_precision = 0;   // detected pairs that match truth
  double mean_jaccard = 0;     // detected vs true cell sets, over true primaries
  std::size_t true_pairs = 0, detected_pairs = 0, matched_pairs = 0;
};

OracleComparison oracle_compare(const GroundTruth& truth,
                                const std::vector<CrashClassification>& cls,
                                const std::vector<ImpactRegion>& regions,
                                const Corpus& corpus);

}  // namespace scp
