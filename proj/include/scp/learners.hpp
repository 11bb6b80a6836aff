#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "scp/sampling.hpp"

namespace scp {

enum class LearnerKind {
  LogisticRegression,
  DecisionTree,
  RandomForest,
  GradientBoostedTrees,
  Mlp,
};
const char* learner_kind_name(LearnerKind k);
std::optional<LearnerKind> parse_learner_kind(const std::string& s);

struct LearnerSpec {
  LearnerKind kind = LearnerKind::LogisticRegression;
  std::map<std::string, double> params;
  std::uint64_t seed = 0;

  double get(const std::string& name, double fallback) const;
};

// Tuned defaults per learner; trees: depth 8 (4 for boosting), min leaf 4,
// min split 5; forest 500 estimators; boosting 400 at lr 0.01; MLP (64,32)
// tanh, batch 32, dropout 0.2, adaptive-moment lr 2e-5.
LearnerSpec default_spec(LearnerKind kind, std::uint64_t seed);
std::vector<LearnerSpec> default_member_specs(std::uint64_t seed);

struct TrainMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;  // n × d
  std::vector<int> labels;                // {0,1}
};
TrainMatrix to_matrix(const std::vector<Sample>& samples);

struct Standardizer {
  std::vector<double> mean, scale;
  void fit(const std::vector<std::vector<double>>& rows);
  std::vector<double> apply(const std::vector<double>& row) const;
};

struct TreeNode {
  int feature = -1;  // -1 → leaf
  double threshold = 0;  // x[feature] <= threshold goes left
  int left = -1, right = -1;
  double value = 0;  // leaf payload

  bool is_leaf() const { return feature < 0; }
};

double tree_value(const std::vector<TreeNode>& nodes,
                  const std::vector<double>& row);

class TrainedModel {
 public:
  virtual ~TrainedModel() = default;

  const LearnerSpec& spec() const { return spec_; }
  const std::vector<std::string>& feature_names() const { return names_; }
  const Standardizer& standardizer() const { return standardizer_; }

  // Validates the feature-name contract; no silent reordering.
  double predict_proba(const FeatureVector& fv) const;
  double predict_proba(const std::vector<std::string>& names,
                       const std::vector<double>& values) const;
  // Trusts that `row` already follows feature_names() order.
  double score(const std::vector<double>& row) const;

  nlohmann::json to_json() const;
  static std::unique_ptr<TrainedModel> from_json(const nlohmann::json& j);

 protected:
  virtual double score_impl(const std::vector<double>& row) const = 0;
  virtual nlohmann::json payload_json() const = 0;
  virtual void load_payload(const nlohmann::json& j) = 0;

  LearnerSpec spec_;
  std::vector<std::string> names_;
  Standardizer standardizer_;  // empty mean → raw features
  friend std::unique_ptr<TrainedModel> fit(const LearnerSpec&,
                                           const TrainMatrix&);
};

class LogisticModel : public TrainedModel {
 public:
  std::vector<double> weights;  // in standardized space
  double bias = 0;

 protected:
  double score_impl(const std::vector<double>& row) const override;
  nlohmann::json payload_json() const override;
  void load_payload(const nlohmann::json& j) override;
};

class DecisionTreeModel : public TrainedModel {
 public:
  std::vector<TreeNode> nodes;

 protected:
  double score_impl(const std::vector<double>& row) const override;
  nlohmann::json payload_json() const override;
  void load_payload(const nlohmann::json& j) override;
};

class RandomForestModel : public TrainedModel {
 public:
  std::vector<std::vector<TreeNode>> trees;

 protected:
  double score_impl(const std::vector<double>& row) const override;
  nlohmann::json payload_json() const override;
  void load_payload(const nlohmann::json& j) override;
};

class GbtModel : public TrainedModel {
 public:
  double f0 = 0;  // prior log-odds
  double learning_rate = 0.01;
  std::vector<std::vector<TreeNode>> trees;

  // Probability using only the first k trees (k ≤ trees.size()).
  double staged_score(const std::vector<double>& row, std::size_t k) const;

 protected:
  double score_impl(const std::vector<double>& row) const override;
  nlohmann::json payload_json() const override;
  void load_payload(const nlohmann::json& j) override;
};

class MlpModel : public TrainedModel {
 public:
  int d_in = 0, h1 = 0, h2 = 0;
  std::vector<double> w1, b1, w2, b2, w3;  // row-major weight blocks
  double b3 = 0;
  std::vector<double> epoch_losses;  // transient, not serialized

 protected:
  double score_impl(const std::vector<double>& row) const override;
  nlohmann::json payload_json() const override;
  void load_payload(const nlohmann::json& j) override;
};

// Throws on single-class labels, non-finite features, or size mismatches.
std::unique_ptr<TrainedModel> fit(const LearnerSpec& spec,
                                  const TrainMatrix& data);
std::unique_ptr<TrainedModel> fit(const LearnerSpec& spec,
                                  const std::vector<Sample>& samples);

// Max relative error between analytic and central finite-difference
// gradients of the single-sample loss, dropout disabled.
double mlp_gradient_check(const TrainedModel& model,
                          const std::vector<double>& row, int label);

}  // namespace scp
