#pragma once

#include "scp/contour.hpp"
#include "scp/ensemble.hpp"
#include "scp/evaluation.hpp"
#include "scp/sampling.hpp"

namespace scp {

struct PipelineConfig {
  double alpha = kDefaultAlpha;          // contour sensitivity
  int window_count = kDefaultWindowCount;
  int control_ratio = kDefaultControlRatio;
  double split_fraction = 0.70;
  double target_far = 0.20;
  VoteStrategy strategy = VoteStrategy::Stacking;
  MetaKind meta_kind = MetaKind::Linear;  // used when strategy == Stacking
  int stacking_folds = 5;
  double alert_threshold = 0.9;
  std::uint64_t seed = 42;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);
PipelineConfig load_pipeline_config(const std::string& path);

struct DatasetBundle {
  DatasetSplit pc, sc1, sc2;
  BuildReport pc_report, sc1_report, sc2_report;
};

// One shuffle of the matched-case crash ids decides train/test membership
// for both secondary datasets, so no case contributes training rows to one
// model and test rows to the other.
std::pair<DatasetSplit, DatasetSplit> split_sc_shared(
    const std::vector<Sample>& sc1, const std::vector<Sample>& sc2,
    double fraction, std::uint64_t seed);

DatasetBundle build_all_datasets(const Corpus& corpus,
                                 const BaselineTable& baselines,
                                 const std::vector<CrashClassification>& cls,
                                 const PipelineConfig& cfg);

nlohmann::json dataset_report_json(const DatasetBundle& data);

// Fits the five default members on `train` and combines them per
// cfg.strategy. `seed` feeds member seeds, bootstrap/mask/init streams, and
// stacking folds.
EnsembleModel train_ensemble(const std::vector<Sample>& train,
                             const PipelineConfig& cfg, std::uint64_t seed,
                             std::vector<std::string>* warnings = nullptr);

// Member-wise probabilities for a whole set (schema checked once).
std::vector<double> ensemble_scores(const EnsembleModel& model,
                                    const std::vector<Sample>& samples);
std::vector<int> labels_of(const std::vector<Sample>& samples);

// Joins secondary-model samples with the crash-likelihood score of the crash
// standing behind each row: the paired primary for cases, the matched
// control crash for SC1 controls, and 0 for crash-free instants (no crash,
// no alarm to join). `pc_cols` restricts freshly extracted crash vectors to
// a column subset (feature ablations).
std::vector<HybridSample> build_hybrid_set(
    const Corpus& corpus, const BaselineTable& baselines,
    const std::vector<CrashClassification>& cls, const ModelBundle& bundle,
    const std::vector<Sample>& sc1_set, const std::vector<Sample>& sc2_set,
    const std::vector<int>* pc_cols = nullptr,
    std::vector<std::string>* warnings = nullptr);

// Trains the three ensembles, calibrates each threshold on its training
// negatives, then tightens the trio until the hybrid OR false-alarm rate on
// the joined training set meets the target.
ModelBundle train_bundle(const Corpus& corpus, const BaselineTable& baselines,
                         const std::vector<CrashClassification>& cls,
                         const DatasetBundle& data, const PipelineConfig& cfg,
                         std::vector<std::string>* warnings = nullptr);

struct ModelEval {
  MetricsReport metrics;
  std::vector<std::pair<std::string, double>> member_aucs;  // member order
};

struct EvaluationReport {
  ModelEval pc, sc1, sc2;
  MetricsReport hybrid;  // threshold field unused; the OR rule decides labels

  nlohmann::json to_json() const;
};

EvaluationReport evaluate_bundle(const Corpus& corpus,
                                 const BaselineTable& baselines,
                                 const std::vector<CrashClassification>& cls,
                                 const ModelBundle& bundle,
                                 const DatasetBundle& data);

// Column masking for feature-set ablations.
std::vector<int> feature_columns(const FeatureSchema& schema, bool weather,
                                 bool geometry);
std::vector<Sample> mask_samples(const std::vector<Sample>& samples,
                                 const std::vector<int>& cols);

struct WindowAblationRow {
  int window_count = 0;
  double sc1_auc = 0, sc2_auc = 0, mean_auc = 0;  // means over seeds
};

// Rebuilds the secondary datasets at each window count and averages ensemble
// test AUC over the given seeds.
std::vector<WindowAblationRow> ablation_windows(
    const Corpus& corpus, const BaselineTable& baselines,
    const std::vector<CrashClassification>& cls,
    const std::vector<int>& window_counts,
    const std::vector<std::uint64_t>& seeds, const PipelineConfig& cfg);

struct FeatureAblationRow {
  std::string feature_set;  // "traffic", "traffic+weather", ...
  double pc_auc = 0, sc1_auc = 0, sc2_auc = 0, hybrid_auc = 0;
};

std::vector<FeatureAblationRow> ablation_features(
    const Corpus& corpus, const BaselineTable& baselines,
    const std::vector<CrashClassification>& cls, const DatasetBundle& data,
    const PipelineConfig& cfg);

struct SubgroupRow {
  std::string group;  // "overall", a freeway name, "weekday"/"weekend"
  std::size_t n_train = 0, n_test = 0;  // secondary samples, both datasets
  double sc1_auc = 0, sc2_auc = 0, hybrid_auc = 0;
  bool skipped = false;
  std::string note;
};

// Refits the secondary models per group (crash-likelihood model stays
// corridor-wide) and evaluates on the group's share of the test split.
// Groups too thin to train or score are reported as skipped.
std::vector<SubgroupRow> subgroup_eval(
    const Corpus& corpus, const BaselineTable& baselines,
    const std::vector<CrashClassification>& cls, const ModelBundle& bundle,
    const DatasetBundle& data, const PipelineConfig& cfg,
    const std::string& grouping,  // "freeway" | "weekday"
    std::vector<std::string>* warnings = nullptr);

void write_window_ablation_csv(const std::string& path,
                               const std::vector<WindowAblationRow>& rows);
void write_feature_ablation_csv(const std::string& path,
                                const std::vector<FeatureAblationRow>& rows);
void write_subgroup_csv(const std::string& path,
                        const std::vector<SubgroupRow>& rows);

}  // namespace scp
