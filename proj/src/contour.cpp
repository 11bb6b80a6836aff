#include "scp/contour.hpp"

#include <algorithm>
#include <deque>

#include "scp/csv.hpp"

namespace scp {

const char* crash_class_name(CrashClass c) {
  switch (c) {
    case CrashClass::Primary: return "Primary";
    case CrashClass::Secondary: return "Secondary";
    case CrashClass::Normal: return "Normal";
  }
  return "Normal";
}

bool ImpactRegion::contains(int segment, Instant bin_start) const {
  auto it = std::lower_bound(
      cells.begin(), cells.end(), std::pair{segment, bin_start},
      [](const ImpactCell& c, const std::pair<int, Instant>& key) {
        return std::tie(c.segment, c.bin_start) <
               std::tie(key.first, key.second);
      });
  return it != cells.end() && it->segment == segment &&
         it->bin_start == bin_start;
}

std::optional<double> speed_delta(const TrafficBin* bin,
                                  const SpeedBaseline* baseline, double alpha) {
  if (!bin || !baseline) return std::nullopt;
  return bin->avg_speed - (baseline->mean_speed - alpha * baseline->std_speed);
}

ImpactRegion impact_region(const Corpus& corpus, const BaselineTable& baselines,
                           const CrashRecord& crash, double alpha) {
  ImpactRegion region;
  region.primary_crash_id = crash.crash_id;
  region.crash_bin = bin_start_of(crash.timestamp);
  region.envelope_segs = envelope_segments(corpus, crash.segment, kEnvelopeMiles);

  const int rows = static_cast<int>(region.envelope_segs.size());
  const int cols = kEnvelopeBins + 1;
  const int anchor_row = rows - 1;  // crash segment is last (downstream-most)

  // Grid of impact decisions in the envelope; -1 unknown, 0 no, 1 impacted.
  std::vector<int8_t> impacted(rows * cols, 0);
  std::vector<double> delta(rows * cols, 0);
  for (int r = 0; r < rows; ++r) {
    const int seg = region.envelope_segs[r];
    for (int c = 0; c < cols; ++c) {
      const Instant bin = region.crash_bin + static_cast<Instant>(c) * kBinSeconds;
      const TrafficBin* tb = corpus.find_bin(seg, bin);
      const SpeedBaseline* bl = baselines.find(seg, slot_of_day(bin));
      auto d = speed_delta(tb, bl, alpha);
      if (!d) {
        ++region.skipped_cells;
        continue;
      }
      delta[r * cols + c] = *d;
      impacted[r * cols + c] = *d < 0 ? 1 : 0;
    }
  }

  // Flood fill from the anchor cell with 8-neighbor adjacency.
  if (!impacted[anchor_row * cols + 0]) return region;
  std::vector<int8_t> in_region(rows * cols, 0);
  std::deque<std::pair<int, int>> queue{{anchor_row, 0}};
  in_region[anchor_row * cols + 0] = 1;
  while (!queue.empty()) {
    auto [r, c] = queue.front();
    queue.pop_front();
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const int nr = r + dr, nc = c + dc;
        if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
        if (in_region[nr * cols + nc] || !impacted[nr * cols + nc]) continue;
        in_region[nr * cols + nc] = 1;
        queue.push_back({nr, nc});
      }
  }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (in_region[r * cols + c])
        region.cells.push_back(
            {region.envelope_segs[r],
             region.crash_bin + static_cast<Instant>(c) * kBinSeconds,
             delta[r * cols + c]});
  std::sort(region.cells.begin(), region.cells.end(),
            [](const ImpactCell& a, const ImpactCell& b) {
              return std::tie(a.segment, a.bin_start) <
                     std::tie(b.segment, b.bin_start);
            });
  return region;
}

std::vector<ImpactRegion> extract_regions(const Corpus& corpus,
                                          const BaselineTable& baselines,
                                          double alpha) {
  std::vector<ImpactRegion> regions;
  regions.reserve(corpus.crashes.size());
  for (const auto& crash : corpus.crashes)
    regions.push_back(impact_region(corpus, baselines, crash, alpha));
  return regions;
}

std::vector<CrashClassification> pair_secondaries(
    const Corpus& corpus, const std::vector<ImpactRegion>& regions) {
  const auto& crashes = corpus.crashes;  // sorted by (timestamp, crash_id)
  std::vector<CrashClassification> out(crashes.size());
  std::vector<bool> has_child(crashes.size(), false);
  for (std::size_t i = 0; i < crashes.size(); ++i) {
    out[i].crash_id = crashes[i].crash_id;
    const Instant bin = bin_start_of(crashes[i].timestamp);
    for (std::size_t j = 0; j < i; ++j) {
      if (!regions[j].contains(crashes[i].segment, bin)) continue;
      out[i].cls = CrashClass::Secondary;
      out[i].paired_primary_id = crashes[j].crash_id;
      out[i].segment_gap = corpus.segments[crashes[j].segment].order_index -
                           corpus.segments[crashes[i].segment].order_index;
      has_child[j] = true;
      break;  // earliest primary wins (j ascends in time order)
    }
  }
  for (std::size_t i = 0; i < crashes.size(); ++i) {
    if (out[i].cls == CrashClass::Secondary) continue;  // precedence
    if (has_child[i]) out[i].cls = CrashClass::Primary;
  }
  return out;
}

ClassificationReport classify_corpus(const Corpus& corpus,
                                     const BaselineTable& baselines,
                                     double alpha) {
  ClassificationReport report;
  auto regions = extract_regions(corpus, baselines, alpha);
  for (std::size_t i = 0; i < corpus.crashes.size(); ++i) {
    const int seg = corpus.crashes[i].segment;
    if (!baselines.find(seg, slot_of_day(bin_start_of(corpus.crashes[i].timestamp))))
      ++report.crashes_without_baseline;
  }
  report.classifications = pair_secondaries(corpus, regions);
  for (const auto& c : report.classifications) {
    switch (c.cls) {
      case CrashClass::Primary: ++report.n_primary; break;
      case CrashClass::Secondary: ++report.n_secondary; break;
      case CrashClass::Normal: ++report.n_normal; break;
    }
    if (c.segment_gap) ++report.gap_histogram[*c.segment_gap];
  }
  const std::size_t total = report.classifications.size();
  report.secondary_ratio =
      total ? static_cast<double>(report.n_secondary) / total : 0.0;
  return report;
}

void write_classifications_csv(const std::string& path,
                               const ClassificationReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : report.classifications)
    rows.push_back({c.crash_id, crash_class_name(c.cls),
                    c.paired_primary_id.value_or(""),
                    c.segment_gap ? std::to_string(*c.segment_gap) : ""});
  write_csv(path, {"crash_id", "class", "paired_primary_id", "segment_gap"},
            rows);
}

void write_cells_csv(const std::string& path, const Corpus& corpus,
                     const std::vector<ImpactRegion>& regions,
                     const std::vector<CrashClassification>& cls) {
  // Only primaries' regions are exported: those are the regions that did the
  // pairing work and the ones Fig.-2-style tooling would plot.
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (i < cls.size() && cls[i].cls != CrashClass::Primary) continue;
    for (const auto& cell : regions[i].cells)
      rows.push_back({regions[i].primary_crash_id,
                      corpus.segments[cell.segment].segment_id,
                      format_rfc3339(cell.bin_start),
                      format_double(cell.delta_speed)});
  }
  write_csv(path, {"primary_crash_id", "segment_id", "bin_start", "delta_speed"},
            rows);
}

}  // namespace scp
