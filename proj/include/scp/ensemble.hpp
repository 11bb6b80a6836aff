#pragma once

#include <optional>

#include "scp/learners.hpp"

namespace scp {

enum class VoteStrategy { Max, Mean, Median, Stacking };
enum class MetaKind { Linear, Logistic, Gbt };

const char* vote_strategy_name(VoteStrategy s);
const char* meta_kind_name(MetaKind k);
// Accepts "max", "mean", "median", "stacking-linear", "stacking-logistic",
// "stacking-gbt" (case-sensitive).
std::optional<std::pair<VoteStrategy, MetaKind>> parse_strategy(
    const std::string& s);

// Voting rules only; stacking combines through EnsembleModel::score.
double ensemble_proba(const std::vector<double>& member_probs,
                      VoteStrategy strategy);

struct StackingMeta {
  MetaKind kind = MetaKind::Linear;
  std::vector<double> weights;  // Linear: one per member
  double intercept = 0;
  std::shared_ptr<const TrainedModel> model;  // Logistic / Gbt

  double score(const std::vector<double>& member_probs) const;
};

struct EnsembleModel {
  std::vector<std::shared_ptr<const TrainedModel>> members;
  VoteStrategy strategy = VoteStrategy::Max;
  std::optional<StackingMeta> meta;

  const std::vector<std::string>& feature_names() const;
  std::vector<double> member_scores(const std::vector<double>& row) const;
  double score(const std::vector<double>& row) const;
  double predict_proba(const FeatureVector& fv) const;

  nlohmann::json to_json() const;
  static EnsembleModel from_json(const nlohmann::json& j);
};

EnsembleModel make_voting(
    std::vector<std::shared_ptr<const TrainedModel>> members,
    VoteStrategy strategy);

// Meta features are k-fold out-of-fold member predictions on the training
// set; members are refit per fold from their specs. Fold count drops (with a
// warning) when positives are scarcer than k.
EnsembleModel fit_stacking(
    std::vector<std::shared_ptr<const TrainedModel>> members,
    const TrainMatrix& train, MetaKind meta_kind, int folds = 5,
    std::uint64_t seed = 0, std::vector<std::string>* warnings = nullptr);

struct ThresholdPolicy {
  double p_thres = 0.5;
  double target_far = 0.20;
  std::string calibration_set_id;
};

// Smallest threshold on the sorted-unique score grid (plus {0,1}) whose
// strict-greater false-alarm fraction meets the target.
ThresholdPolicy calibrate_threshold(const std::vector<double>& negative_scores,
                                    double target_far);

std::string score_set_hash(const std::vector<double>& scores);

struct CalibratedEnsemble {
  EnsembleModel model;
  ThresholdPolicy policy;
};

struct ModelBundle {
  CalibratedEnsemble pc, sc1, sc2;
  double hybrid_far_target = 0.20;
  int window_count = kDefaultWindowCount;
  int version = 1;
};

struct HybridOutput {
  double prob = 0;
  int label = 0;
};

// Label = OR of the three per-model threshold decisions; prob = max.
HybridOutput hybrid_predict(double pc_prob, double sc1_prob, double sc2_prob,
                            const ModelBundle& bundle);

struct HybridSample {
  std::string id;
  int label = 0;
  double pc_prob = 0, sc1_prob = 0, sc2_prob = 0;
};

// Raises the three thresholds uniformly in quantile space (monotone
// bisection, <= 50 iterations) until hybrid FAR on the validation set meets
// the target. Thresholds never drop below their single-model calibration.
ModelBundle calibrate_hybrid(ModelBundle bundle,
                             const std::vector<HybridSample>& validation,
                             double target_far);

struct CorrelationReport {
  std::vector<std::string> names;                 // member kinds
  std::vector<std::vector<double>> matrix;        // NaN where undefined
  std::vector<std::uint8_t> constant_member;
};

CorrelationReport member_correlation_report(const EnsembleModel& ensemble,
                                            const std::vector<Sample>& samples);

void save_bundle(const std::string& dir, const ModelBundle& bundle);
ModelBundle load_bundle(const std::string& dir);

}  // namespace scp
