#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scp/contour.hpp"
#include "scp/features.hpp"

namespace scp {

constexpr int kDefaultControlRatio = 4;
constexpr int kDefaultWindowCount = 4;

struct SampleMeta {
  std::string freeway;
  bool weekday_flag = false;
  int hour_of_day = 0;
  std::string matched_case_id;  // empty for cases and PC samples
  std::string source_crash_id;  // crash behind this row; empty for crash-free instants
};

struct Sample {
  std::string sample_id;
  ModelKind model_kind = ModelKind::PC;
  int label = 0;
  FeatureVector features;
  SampleMeta meta;
};

struct BuildReport {
  std::size_t positives = 0, negatives = 0;
  std::size_t rejected_positives = 0;  // extraction-rejected cases
  std::size_t rejected_controls = 0;   // extraction- or eligibility-rejected
  std::size_t shortfall_cases = 0;     // cases with < ratio controls
  std::size_t zero_control_cases = 0;
  std::vector<std::string> warnings;

  void warn(std::string msg);
};

// Positives = Primary crashes, negatives = every Normal crash, one PC vector
// each at the crash's own segment and time. Throws when no primary survives.
std::vector<Sample> build_pc_dataset(const Corpus& corpus,
                                     const BaselineTable& baselines,
                                     const std::vector<CrashClassification>& cls,
                                     BuildReport* report = nullptr);

// Matched case-control: each secondary crash (case) draws up to `ratio`
// Normal crashes at the paired primary's segment and clock hour; a control's
// vector is referenced at its own crash time plus the case's primary→secondary
// gap, reusing the case's window pattern.
std::vector<Sample> build_sc1_dataset(const Corpus& corpus,
                                      const BaselineTable& baselines,
                                      const std::vector<CrashClassification>& cls,
                                      int ratio = kDefaultControlRatio,
                                      int window_count = kDefaultWindowCount,
                                      std::uint64_t seed = 0,
                                      BuildReport* report = nullptr);

// Matched case-control against crash-free instants: same segment, same clock
// time, same day of week on other weeks, eligible only when no crash falls
// within 2 mi (either direction) and ±2 h of the instant.
std::vector<Sample> build_sc2_dataset(const Corpus& corpus,
                                      const BaselineTable& baselines,
                                      const std::vector<CrashClassification>& cls,
                                      int ratio = kDefaultControlRatio,
                                      int window_count = kDefaultWindowCount,
                                      std::uint64_t seed = 0,
                                      BuildReport* report = nullptr);

struct DatasetSplit {
  std::vector<Sample> train, test;
  std::uint64_t seed = 0;
  double split_fraction = 0.70;
};

// Stratified by matched-group composition; a case and its controls always
// land on the same side. Throws when a label class has < 2 members.
DatasetSplit split_dataset(const std::vector<Sample>& samples, double fraction,
                           std::uint64_t seed);

// Order-preserving filter over sample metadata; caller warns on empty result.
std::vector<Sample> filter_subgroup(
    const std::vector<Sample>& samples,
    const std::function<bool(const Sample&)>& predicate);

void write_samples_csv(const std::string& path,
                       const std::vector<Sample>& samples);
// One homogeneous schema per file: sample_id,label,model_kind,<features>.
void write_features_csv(const std::string& path,
                        const std::vector<Sample>& samples);
std::vector<Sample> read_dataset(const std::string& features_path,
                                 const std::string& samples_path);

}  // namespace scp
