#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scp/corpus.hpp"

namespace scp {

constexpr double kDefaultAlpha = 0.25;
constexpr double kEnvelopeMiles = 2.0;
constexpr Instant kEnvelopeSeconds = 7200;
constexpr int kEnvelopeBins = 24;  // bin offsets 0..24 after the crash bin

struct ImpactCell {
  int segment = -1;
  Instant bin_start = 0;
  double delta_speed = 0;  // Δs = s − (mean − α·std); impacted iff < 0
};

struct ImpactRegion {
  std::string primary_crash_id;
  std::vector<ImpactCell> cells;  // sorted by (segment, bin_start)
  std::vector<int> envelope_segs;  // upstream-most first, crash segment last
  Instant crash_bin = 0;
  int skipped_cells = 0;  // missing bin or baseline inside the envelope

  bool contains(int segment, Instant bin_start) const;
};

enum class CrashClass { Primary, Secondary, Normal };
const char* crash_class_name(CrashClass c);

struct CrashClassification {
  std::string crash_id;
  CrashClass cls = CrashClass::Normal;
  std::optional<std::string> paired_primary_id;
  std::optional<int> segment_gap;  // order_index(primary) − order_index(secondary)
};

struct ClassificationReport {
  std::vector<CrashClassification> classifications;  // corpus crash order
  std::size_t n_primary = 0, n_secondary = 0, n_normal = 0;
  double secondary_ratio = 0;  // secondary / total
  std::map<int, int> gap_histogram;
  std::size_t crashes_without_baseline = 0;
};

// Δs per Eq. 1. Nullopt when the bin or baseline is missing.
std::optional<double> speed_delta(const TrafficBin* bin,
                                  const SpeedBaseline* baseline,
                                  double alpha = kDefaultAlpha);

// Impacted cells inside the 2 mi / 2 h envelope that are 8-neighbor connected
// to the crash's own (segment, bin) anchor cell. Empty when the anchor is not
// impacted or lacks a baseline.
ImpactRegion impact_region(const Corpus& corpus, const BaselineTable& baselines,
                           const CrashRecord& crash,
                           double alpha = kDefaultAlpha);

// Earliest-primary pairing over time-sorted crashes; chaining allowed.
std::vector<CrashClassification> pair_secondaries(
    const Corpus& corpus, const std::vector<ImpactRegion>& regions);

ClassificationReport classify_corpus(const Corpus& corpus,
                                     const BaselineTable& baselines,
                                     double alpha = kDefaultAlpha);

// Regions for every crash, in corpus crash order.
std::vector<ImpactRegion> extract_regions(const Corpus& corpus,
                                          const BaselineTable& baselines,
                                          double alpha = kDefaultAlpha);

void write_classifications_csv(const std::string& path,
                               const ClassificationReport& report);
void write_cells_csv(const std::string& path, const Corpus& corpus,
                     const std::vector<ImpactRegion>& regions,
                     const std::vector<CrashClassification>& cls);

}  // namespace scp
