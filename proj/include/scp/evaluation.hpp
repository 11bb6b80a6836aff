#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace scp {

// Area under the ROC curve via the rank-sum (Mann-Whitney) statistic with
// average ranks for tied scores.  Equals exhaustive pair counting exactly:
// both reduce to (wins + ties/2) / (n_pos * n_neg).  Throws if either class
// is absent.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct MetricsReport {
  double accuracy = 0.0;
  double sensitivity = 0.0;  // tp / (tp + fn); 0 when no positives
  double far = 0.0;          // fp / (fp + tn); 0 when no negatives
  double auc = 0.0;          // 0.5 when only one class present
  long long tp = 0, fp = 0, tn = 0, fn = 0;
  double threshold = 0.0;

  nlohmann::json to_json() const;
};

// Confusion counts and derived rates at a decision threshold.  A sample is
// called positive iff its score is strictly greater than the threshold,
// matching the alarm rule used everywhere else.
MetricsReport metrics_at_threshold(const std::vector<double>& scores,
                                   const std::vector<int>& labels,
                                   double p_thres);

struct ImportanceEntry {
  std::string feature;
  double mean_auc_drop = 0.0;  // baseline AUC minus mean permuted AUC
};

// Permutation importance: shuffle one column at a time across rows, rescore,
// and record how much AUC falls.  `scorer` maps one feature row to a score.
// Entries come back sorted by mean_auc_drop, largest first (ties keep
// schema order).
std::vector<ImportanceEntry> permutation_importance(
    const std::function<double(const std::vector<double>&)>& scorer,
    const std::vector<std::string>& names,
    const std::vector<std::vector<double>>& rows,
    const std::vector<int>& labels, int repeats, std::uint64_t seed);

}  // namespace scp
