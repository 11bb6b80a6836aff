#include "scp/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "scp/rng.hpp"

namespace scp {
namespace {

constexpr double kGainEps = 1e-12;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamp01(double p, double eps = 1e-12) {
  return std::min(1.0 - eps, std::max(eps, p));
}

double prior_log_odds(const std::vector<int>& y) {
  double pos = 0;
  for (int v : y) pos += v;
  const double p = clamp01(pos / static_cast<double>(y.size()), 1e-6);
  return std::log(p / (1.0 - p));
}

// ---------------------------------------------------------------------------
// Shared tree engine: level-wise growth over presorted feature columns with
// per-row weights. Binary targets under weighted variance reduction pick the
// same splits as gini, so one engine serves classification and boosting.

struct TreeParams {
  int max_depth = 8;
  double min_leaf = 4;
  double min_split = 5;
  int features_per_split = 0;  // 0 → all features at every node
  std::uint64_t mask_seed = 0;
  bool newton_leaves = false;  // leaf = Σgrad / Σhess instead of mean target
};

struct TreeProblem {
  const std::vector<std::vector<double>>* cols = nullptr;   // d × n
  const std::vector<std::vector<int>>* order = nullptr;     // d × n presorted
  const std::vector<double>* w = nullptr;                   // 0 → row unused
  const std::vector<double>* t = nullptr;                   // target
  const std::vector<double>* h = nullptr;                   // newton denom
};

class TreeBuilder {
 public:
  TreeBuilder(const TreeProblem& p, const TreeParams& cfg)
      : p_(p), cfg_(cfg), d_(static_cast<int>(p.cols->size())),
        n_(static_cast<int>(p.w->size())), mask_rng_(cfg.mask_seed) {}

  std::vector<TreeNode> build() {
    node_of_.assign(n_, -1);
    nodes_.clear();
    stats_.clear();
    masks_.clear();
    new_node();
    auto& root = stats_[0];
    for (int i = 0; i < n_; ++i) {
      const double wi = (*p_.w)[i];
      if (wi <= 0) continue;
      node_of_[i] = 0;
      root.w += wi;
      root.wt += wi * (*p_.t)[i];
      if (p_.h) root.wh += wi * (*p_.h)[i];
    }
    std::vector<int> active;
    if (cfg_.max_depth > 0 && root.w >= cfg_.min_split)
      active.push_back(0);
    else
      finalize_leaf(0);

    for (int depth = 0; depth < cfg_.max_depth && !active.empty(); ++depth) {
      grow_level(active);
      std::vector<int> next;
      for (int nid : active) {
        if (nodes_[nid].is_leaf()) continue;  // split failed → already a leaf
        for (int child : {nodes_[nid].left, nodes_[nid].right}) {
          if (depth + 1 < cfg_.max_depth && stats_[child].w >= cfg_.min_split)
            next.push_back(child);
          else
            finalize_leaf(child);
        }
      }
      active = std::move(next);
    }
    return std::move(nodes_);
  }

 private:
  struct NodeStat {
    double w = 0, wt = 0, wh = 0;
  };

  int new_node() {
    nodes_.push_back({});
    stats_.push_back({});
    masks_.push_back({});
    const int id = static_cast<int>(nodes_.size()) - 1;
    if (cfg_.features_per_split > 0) draw_mask(id);
    return id;
  }

  void draw_mask(int nid) {
    std::vector<int> pool(d_);
    std::iota(pool.begin(), pool.end(), 0);
    const int k = std::min(cfg_.features_per_split, d_);
    for (int j = 0; j < k; ++j) {
      const int r = j + static_cast<int>(mask_rng_() % (d_ - j));
      std::swap(pool[j], pool[r]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    masks_[nid] = std::move(pool);
  }

  void finalize_leaf(int nid) {
    const auto& s = stats_[nid];
    TreeNode& node = nodes_[nid];
    node.feature = -1;
    if (s.w <= 0) {
      node.value = 0;
      return;
    }
    node.value = cfg_.newton_leaves ? s.wt / std::max(s.wh, 1e-9)
                                    : s.wt / s.w;
  }

  void grow_level(const std::vector<int>& active) {
    const int m = static_cast<int>(active.size());
    std::vector<int> slot_of(nodes_.size(), -1);
    for (int s = 0; s < m; ++s) slot_of[active[s]] = s;

    std::vector<double> best_gain(m, 0), best_thr(m, 0);
    std::vector<int> best_feat(m, -1);
    std::vector<std::uint8_t> feature_used(d_, cfg_.features_per_split == 0);
    std::vector<std::uint8_t> allowed;
    if (cfg_.features_per_split > 0) {
      allowed.assign(static_cast<std::size_t>(m) * d_, 0);
      for (int s = 0; s < m; ++s)
        for (int f : masks_[active[s]]) {
          allowed[static_cast<std::size_t>(s) * d_ + f] = 1;
          feature_used[f] = 1;
        }
    }

    std::vector<double> run_w(m), run_wt(m), last_val(m);
    std::vector<std::uint8_t> has_prev(m);
    for (int f = 0; f < d_; ++f) {
      if (!feature_used[f]) continue;
      std::fill(run_w.begin(), run_w.end(), 0.0);
      std::fill(run_wt.begin(), run_wt.end(), 0.0);
      std::fill(has_prev.begin(), has_prev.end(), 0);
      const auto& col = (*p_.cols)[f];
      for (int idx : (*p_.order)[f]) {
        const int nid = node_of_[idx];
        if (nid < 0) continue;
        const int s = slot_of[nid];
        if (s < 0) continue;
        if (!allowed.empty() && !allowed[static_cast<std::size_t>(s) * d_ + f])
          continue;
        const double v = col[idx];
        if (has_prev[s] && v > last_val[s]) {
          const auto& ns = stats_[nid];
          const double wl = run_w[s], wr = ns.w - run_w[s];
          if (wl >= cfg_.min_leaf && wr >= cfg_.min_leaf) {
            const double tl = run_wt[s], tr = ns.wt - run_wt[s];
            const double gain =
                tl * tl / wl + tr * tr / wr - ns.wt * ns.wt / ns.w;
            if (gain - best_gain[s] > kGainEps) {
              best_gain[s] = gain;
              best_feat[s] = f;
              best_thr[s] = last_val[s];  // x <= left max goes left
            }
          }
        }
        run_w[s] += (*p_.w)[idx];
        run_wt[s] += (*p_.w)[idx] * (*p_.t)[idx];
        last_val[s] = v;
        has_prev[s] = 1;
      }
    }

    // Materialize splits (children drawn in active order, left then right).
    for (int s = 0; s < m; ++s) {
      const int nid = active[s];
      if (best_feat[s] < 0) {
        finalize_leaf(nid);
        continue;
      }
      nodes_[nid].feature = best_feat[s];
      nodes_[nid].threshold = best_thr[s];
      nodes_[nid].left = new_node();
      nodes_[nid].right = new_node();
    }
    for (int i = 0; i < n_; ++i) {
      const int nid = node_of_[i];
      if (nid < 0 || static_cast<std::size_t>(nid) >= slot_of.size() ||
          slot_of[nid] < 0)
        continue;
      const TreeNode& node = nodes_[nid];
      if (node.is_leaf()) {
        node_of_[i] = -1;  // settled in a finished leaf
        continue;
      }
      const int child =
          (*p_.cols)[node.feature][i] <= node.threshold ? node.left
                                                        : node.right;
      node_of_[i] = child;
      const double wi = (*p_.w)[i];
      stats_[child].w += wi;
      stats_[child].wt += wi * (*p_.t)[i];
      if (p_.h) stats_[child].wh += wi * (*p_.h)[i];
    }
  }

  const TreeProblem& p_;
  const TreeParams& cfg_;
  int d_ = 0, n_ = 0;
  std::mt19937_64 mask_rng_;
  std::vector<TreeNode> nodes_;
  std::vector<NodeStat> stats_;
  std::vector<std::vector<int>> masks_;
  std::vector<int> node_of_;
};

struct ColumnView {
  std::vector<std::vector<double>> cols;  // d × n
  std::vector<std::vector<int>> order;    // presorted row indices per column

  explicit ColumnView(const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size(), d = rows.empty() ? 0 : rows[0].size();
    cols.assign(d, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t f = 0; f < d; ++f) cols[f][i] = rows[i][f];
    order.assign(d, {});
    for (std::size_t f = 0; f < d; ++f) {
      auto& ord = order[f];
      ord.resize(n);
      std::iota(ord.begin(), ord.end(), 0);
      std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) {
        return cols[f][a] < cols[f][b];
      });
    }
  }
};

void validate_training_data(const TrainMatrix& data) {
  if (data.rows.size() < 4)
    throw std::invalid_argument("need at least 4 training samples");
  if (data.rows.size() != data.labels.size())
    throw std::invalid_argument("rows and labels disagree");
  std::size_t pos = 0;
  for (int y : data.labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0/1");
    pos += y;
  }
  if (pos < 2 || data.labels.size() - pos < 2)
    throw std::invalid_argument("need >= 2 samples of each label");
  for (const auto& row : data.rows) {
    if (row.size() != data.names.size())
      throw std::invalid_argument("feature width mismatch");
    for (double v : row)
      if (!std::isfinite(v))
        throw std::invalid_argument("non-finite feature value");
  }
}

// ---------------------------------------------------------------------------
// Adam state over a flat parameter view.

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  long long t = 0;

  explicit Adam(std::size_t n, double lr_in) : lr(lr_in), m(n, 0), v(n, 0) {}

  void step(std::vector<double*>& params, const std::vector<double>& grad) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1 - beta2) * grad[i] * grad[i];
      *params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
};

}  // namespace

// ---------------------------------------------------------------------------

const char* learner_kind_name(LearnerKind k) {
  switch (k) {
    case LearnerKind::LogisticRegression: return "LogisticRegression";
    case LearnerKind::DecisionTree: return "DecisionTree";
    case LearnerKind::RandomForest: return "RandomForest";
    case LearnerKind::GradientBoostedTrees: return "GradientBoostedTrees";
    case LearnerKind::Mlp: return "Mlp";
  }
  return "LogisticRegression";
}

std::optional<LearnerKind> parse_learner_kind(const std::string& s) {
  for (LearnerKind k :
       {LearnerKind::LogisticRegression, LearnerKind::DecisionTree,
        LearnerKind::RandomForest, LearnerKind::GradientBoostedTrees,
        LearnerKind::Mlp})
    if (s == learner_kind_name(k)) return k;
  return std::nullopt;
}

double LearnerSpec::get(const std::string& name, double fallback) const {
  auto it = params.find(name);
  return it == params.end() ? fallback : it->second;
}

LearnerSpec default_spec(LearnerKind kind, std::uint64_t seed) {
  LearnerSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  switch (kind) {
    case LearnerKind::LogisticRegression:
      spec.params = {{"learning_rate", 0.05}, {"epochs", 400}, {"l2", 1e-4}};
      break;
    case LearnerKind::DecisionTree:
      spec.params = {{"max_depth", 8},
                     {"min_samples_leaf", 4},
                     {"min_samples_split", 5}};
      break;
    case LearnerKind::RandomForest:
      spec.params = {{"n_estimators", 500},
                     {"max_depth", 8},
                     {"min_samples_leaf", 4},
                     {"min_samples_split", 5}};
      break;
    case LearnerKind::GradientBoostedTrees:
      spec.params = {{"n_estimators", 400},
                     {"max_depth", 4},
                     {"learning_rate", 0.01},
                     {"min_samples_leaf", 4},
                     {"min_samples_split", 5}};
      break;
    case LearnerKind::Mlp:
      spec.params = {{"hidden1", 64},    {"hidden2", 32},
                     {"learning_rate", 2e-5}, {"epochs", 200},
                     {"batch_size", 32}, {"dropout", 0.2}};
      break;
  }
  return spec;
}

std::vector<LearnerSpec> default_member_specs(std::uint64_t seed) {
  std::vector<LearnerSpec> specs;
  int idx = 0;
  for (LearnerKind k :
       {LearnerKind::LogisticRegression, LearnerKind::DecisionTree,
        LearnerKind::RandomForest, LearnerKind::GradientBoostedTrees,
        LearnerKind::Mlp})
    specs.push_back(default_spec(k, sub_seed(seed, 'L', idx++)));
  return specs;
}

TrainMatrix to_matrix(const std::vector<Sample>& samples) {
  if (samples.empty()) throw std::invalid_argument("no samples");
  TrainMatrix data;
  data.names = samples.front().features.schema->names;
  for (const auto& s : samples) {
    if (s.features.schema->names != data.names)
      throw std::invalid_argument("mixed feature schemas");
    data.rows.push_back(s.features.values);
    data.labels.push_back(s.label);
  }
  return data;
}

void Standardizer::fit(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size(), d = rows[0].size();
  mean.assign(d, 0);
  scale.assign(d, 1);
  for (const auto& row : rows)
    for (std::size_t f = 0; f < d; ++f) mean[f] += row[f];
  for (std::size_t f = 0; f < d; ++f) mean[f] /= static_cast<double>(n);
  std::vector<double> var(d, 0);
  for (const auto& row : rows)
    for (std::size_t f = 0; f < d; ++f) {
      const double c = row[f] - mean[f];
      var[f] += c * c;
    }
  for (std::size_t f = 0; f < d; ++f) {
    const double sd = std::sqrt(var[f] / static_cast<double>(n));
    scale[f] = sd < 1e-12 ? 1.0 : sd;
  }
}

std::vector<double> Standardizer::apply(const std::vector<double>& row) const {
  std::vector<double> out(row.size());
  for (std::size_t f = 0; f < row.size(); ++f)
    out[f] = (row[f] - mean[f]) / scale[f];
  return out;
}

double tree_value(const std::vector<TreeNode>& nodes,
                  const std::vector<double>& row) {
  int nid = 0;
  while (!nodes[nid].is_leaf())
    nid = row[nodes[nid].feature] <= nodes[nid].threshold ? nodes[nid].left
                                                          : nodes[nid].right;
  return nodes[nid].value;
}

// ---------------------------------------------------------------------------
// TrainedModel base

double TrainedModel::predict_proba(const FeatureVector& fv) const {
  return predict_proba(fv.schema->names, fv.values);
}

double TrainedModel::predict_proba(const std::vector<std::string>& names,
                                   const std::vector<double>& values) const {
  if (names != names_)
    throw std::invalid_argument(
        "feature names do not match the model contract");
  return score(values);
}

double TrainedModel::score(const std::vector<double>& row) const {
  if (row.size() != names_.size())
    throw std::invalid_argument("feature count mismatch");
  if (standardizer_.mean.empty()) return score_impl(row);
  return score_impl(standardizer_.apply(row));
}

nlohmann::json TrainedModel::to_json() const {
  nlohmann::json j;
  j["format"] = "scp-model";
  j["version"] = 1;
  j["kind"] = learner_kind_name(spec_.kind);
  j["seed"] = spec_.seed;
  j["params"] = spec_.params;
  j["feature_names"] = names_;
  if (standardizer_.mean.empty())
    j["standardizer"] = nullptr;
  else
    j["standardizer"] = {{"mean", standardizer_.mean},
                         {"scale", standardizer_.scale}};
  j["payload"] = payload_json();
  return j;
}

std::unique_ptr<TrainedModel> TrainedModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "scp-model")
    throw std::runtime_error("not a model container");
  const auto kind = parse_learner_kind(j.at("kind").get<std::string>());
  if (!kind) throw std::runtime_error("unknown model kind");
  std::unique_ptr<TrainedModel> model;
  switch (*kind) {
    case LearnerKind::LogisticRegression:
      model = std::make_unique<LogisticModel>();
      break;
    case LearnerKind::DecisionTree:
      model = std::make_unique<DecisionTreeModel>();
      break;
    case LearnerKind::RandomForest:
      model = std::make_unique<RandomForestModel>();
      break;
    case LearnerKind::GradientBoostedTrees:
      model = std::make_unique<GbtModel>();
      break;
    case LearnerKind::Mlp:
      model = std::make_unique<MlpModel>();
      break;
  }
  model->spec_.kind = *kind;
  model->spec_.seed = j.at("seed").get<std::uint64_t>();
  model->spec_.params =
      j.at("params").get<std::map<std::string, double>>();
  model->names_ = j.at("feature_names").get<std::vector<std::string>>();
  if (!j.at("standardizer").is_null()) {
    model->standardizer_.mean =
        j["standardizer"].at("mean").get<std::vector<double>>();
    model->standardizer_.scale =
        j["standardizer"].at("scale").get<std::vector<double>>();
  }
  model->load_payload(j.at("payload"));
  return model;
}

// ---------------------------------------------------------------------------
// Tree (de)serialization shared by the tree-based models.

namespace {

nlohmann::json nodes_to_json(const std::vector<TreeNode>& nodes) {
  nlohmann::json j;
  auto& feature = j["feature"] = nlohmann::json::array();
  auto& threshold = j["threshold"] = nlohmann::json::array();
  auto& left = j["left"] = nlohmann::json::array();
  auto& right = j["right"] = nlohmann::json::array();
  auto& value = j["value"] = nlohmann::json::array();
  for (const auto& n : nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
  }
  return j;
}

std::vector<TreeNode> nodes_from_json(const nlohmann::json& j) {
  const auto& feature = j.at("feature");
  std::vector<TreeNode> nodes(feature.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    nodes[i].feature = feature[i].get<int>();
    nodes[i].threshold = j.at("threshold")[i].get<double>();
    nodes[i].left = j.at("left")[i].get<int>();
    nodes[i].right = j.at("right")[i].get<int>();
    nodes[i].value = j.at("value")[i].get<double>();
  }
  return nodes;
}

}  // namespace

// ---------------------------------------------------------------------------
// Logistic regression

double LogisticModel::score_impl(const std::vector<double>& row) const {
  double z = bias;
  for (std::size_t f = 0; f < weights.size(); ++f) z += weights[f] * row[f];
  return sigmoid(z);
}

nlohmann::json LogisticModel::payload_json() const {
  return {{"weights", weights}, {"bias", bias}};
}

void LogisticModel::load_payload(const nlohmann::json& j) {
  weights = j.at("weights").get<std::vector<double>>();
  bias = j.at("bias").get<double>();
}

namespace {

std::unique_ptr<LogisticModel> fit_logistic(const LearnerSpec& spec,
                                            const TrainMatrix& data) {
  auto model = std::make_unique<LogisticModel>();
  model->weights.assign(data.names.size(), 0);
  model->bias = 0;

  Standardizer std_;
  std_.fit(data.rows);
  std::vector<std::vector<double>> X;
  for (const auto& row : data.rows) X.push_back(std_.apply(row));

  const int epochs = static_cast<int>(spec.get("epochs", 400));
  const double lr = spec.get("learning_rate", 0.05);
  const double l2 = spec.get("l2", 1e-4);
  const std::size_t n = X.size(), d = data.names.size();

  std::vector<double*> params;
  for (auto& w : model->weights) params.push_back(&w);
  params.push_back(&model->bias);
  Adam adam(params.size(), lr);
  std::vector<double> grad(params.size());

  for (int e = 0; e < epochs; ++e) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double z = model->bias;
      for (std::size_t f = 0; f < d; ++f) z += model->weights[f] * X[i][f];
      const double err = sigmoid(z) - data.labels[i];
      for (std::size_t f = 0; f < d; ++f) grad[f] += err * X[i][f];
      grad[d] += err;
    }
    for (std::size_t f = 0; f < d; ++f)
      grad[f] = grad[f] / static_cast<double>(n) + l2 * model->weights[f];
    grad[d] /= static_cast<double>(n);
    adam.step(params, grad);
  }
  return model;
}

}  // namespace

// ---------------------------------------------------------------------------
// Decision tree / random forest / boosted trees

double DecisionTreeModel::score_impl(const std::vector<double>& row) const {
  return tree_value(nodes, row);
}

nlohmann::json DecisionTreeModel::payload_json() const {
  return {{"nodes", nodes_to_json(nodes)}};
}

void DecisionTreeModel::load_payload(const nlohmann::json& j) {
  nodes = nodes_from_json(j.at("nodes"));
}

double RandomForestModel::score_impl(const std::vector<double>& row) const {
  double sum = 0;
  for (const auto& tree : trees) sum += tree_value(tree, row);
  return sum / static_cast<double>(trees.size());
}

nlohmann::json RandomForestModel::payload_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& tree : trees) arr.push_back(nodes_to_json(tree));
  return {{"trees", std::move(arr)}};
}

void RandomForestModel::load_payload(const nlohmann::json& j) {
  trees.clear();
  for (const auto& t : j.at("trees")) trees.push_back(nodes_from_json(t));
}

double GbtModel::staged_score(const std::vector<double>& row,
                              std::size_t k) const {
  double f = f0;
  for (std::size_t i = 0; i < k && i < trees.size(); ++i)
    f += learning_rate * tree_value(trees[i], row);
  return sigmoid(f);
}

double GbtModel::score_impl(const std::vector<double>& row) const {
  return staged_score(row, trees.size());
}

nlohmann::json GbtModel::payload_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& tree : trees) arr.push_back(nodes_to_json(tree));
  return {{"f0", f0}, {"learning_rate", learning_rate},
          {"trees", std::move(arr)}};
}

void GbtModel::load_payload(const nlohmann::json& j) {
  f0 = j.at("f0").get<double>();
  learning_rate = j.at("learning_rate").get<double>();
  trees.clear();
  for (const auto& t : j.at("trees")) trees.push_back(nodes_from_json(t));
}

namespace {

std::unique_ptr<DecisionTreeModel> fit_tree(const LearnerSpec& spec,
                                            const TrainMatrix& data) {
  ColumnView view(data.rows);
  const std::size_t n = data.rows.size();
  std::vector<double> w(n, 1.0), t(data.labels.begin(), data.labels.end());
  TreeParams cfg;
  cfg.max_depth = static_cast<int>(spec.get("max_depth", 8));
  cfg.min_leaf = spec.get("min_samples_leaf", 4);
  cfg.min_split = spec.get("min_samples_split", 5);
  TreeProblem p{&view.cols, &view.order, &w, &t, nullptr};
  auto model = std::make_unique<DecisionTreeModel>();
  model->nodes = TreeBuilder(p, cfg).build();
  return model;
}

std::unique_ptr<RandomForestModel> fit_forest(const LearnerSpec& spec,
                                              const TrainMatrix& data) {
  ColumnView view(data.rows);
  const std::size_t n = data.rows.size();
  const int d = static_cast<int>(data.names.size());
  std::vector<double> t(data.labels.begin(), data.labels.end());
  const int n_trees = static_cast<int>(spec.get("n_estimators", 500));
  const int per_split = std::max(
      1, static_cast<int>(spec.get("max_features",
                                   std::floor(std::sqrt(double(d))))));
  auto model = std::make_unique<RandomForestModel>();
  std::vector<double> w(n);
  for (int tree = 0; tree < n_trees; ++tree) {
    std::mt19937_64 boot(sub_seed(spec.seed, 'B', tree));
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) w[boot() % n] += 1.0;
    TreeParams cfg;
    cfg.max_depth = static_cast<int>(spec.get("max_depth", 8));
    cfg.min_leaf = spec.get("min_samples_leaf", 4);
    cfg.min_split = spec.get("min_samples_split", 5);
    cfg.features_per_split = per_split;
    cfg.mask_seed = sub_seed(spec.seed, 'M', tree);
    TreeProblem p{&view.cols, &view.order, &w, &t, nullptr};
    model->trees.push_back(TreeBuilder(p, cfg).build());
  }
  return model;
}

std::unique_ptr<GbtModel> fit_gbt(const LearnerSpec& spec,
                                  const TrainMatrix& data) {
  ColumnView view(data.rows);
  const std::size_t n = data.rows.size();
  auto model = std::make_unique<GbtModel>();
  model->f0 = prior_log_odds(data.labels);
  model->learning_rate = spec.get("learning_rate", 0.01);
  const int n_trees = static_cast<int>(spec.get("n_estimators", 400));

  std::vector<double> f(n, model->f0), w(n, 1.0), resid(n), hess(n);
  TreeParams cfg;
  cfg.max_depth = static_cast<int>(spec.get("max_depth", 4));
  cfg.min_leaf = spec.get("min_samples_leaf", 4);
  cfg.min_split = spec.get("min_samples_split", 5);
  cfg.newton_leaves = true;
  for (int tree = 0; tree < n_trees; ++tree) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(f[i]);
      resid[i] = data.labels[i] - p;
      hess[i] = p * (1.0 - p);
    }
    TreeProblem p{&view.cols, &view.order, &w, &resid, &hess};
    model->trees.push_back(TreeBuilder(p, cfg).build());
    const auto& nodes = model->trees.back();
    for (std::size_t i = 0; i < n; ++i)
      f[i] += model->learning_rate * tree_value(nodes, data.rows[i]);
  }
  return model;
}

}  // namespace

// ---------------------------------------------------------------------------
// MLP: two tanh hidden layers, sigmoid output, BCE loss, inverted dropout,
// mini-batch adaptive-moment updates.

namespace {

struct MlpGrads {
  std::vector<double> w1, b1, w2, b2, w3;
  double b3 = 0;

  explicit MlpGrads(const MlpModel& m)
      : w1(m.w1.size(), 0), b1(m.b1.size(), 0), w2(m.w2.size(), 0),
        b2(m.b2.size(), 0), w3(m.w3.size(), 0) {}
};

struct MlpActivations {
  std::vector<double> a1, a2;  // post-tanh (and post-dropout when training)
  double p = 0;
};

MlpActivations mlp_forward(const MlpModel& m, const std::vector<double>& x,
                           const std::vector<double>* drop1,
                           const std::vector<double>* drop2) {
  MlpActivations act;
  act.a1.resize(m.h1);
  for (int j = 0; j < m.h1; ++j) {
    double z = m.b1[j];
    for (int f = 0; f < m.d_in; ++f) z += m.w1[j * m.d_in + f] * x[f];
    act.a1[j] = std::tanh(z);
    if (drop1) act.a1[j] *= (*drop1)[j];
  }
  act.a2.resize(m.h2);
  for (int j = 0; j < m.h2; ++j) {
    double z = m.b2[j];
    for (int k = 0; k < m.h1; ++k) z += m.w2[j * m.h1 + k] * act.a1[k];
    act.a2[j] = std::tanh(z);
    if (drop2) act.a2[j] *= (*drop2)[j];
  }
  double z = m.b3;
  for (int j = 0; j < m.h2; ++j) z += m.w3[j] * act.a2[j];
  act.p = sigmoid(z);
  return act;
}

// Accumulates one sample's gradients; returns its BCE loss.
double mlp_backward(const MlpModel& m, const std::vector<double>& x, int y,
                    const std::vector<double>* drop1,
                    const std::vector<double>* drop2, MlpGrads& g) {
  const MlpActivations act = mlp_forward(m, x, drop1, drop2);
  const double p = clamp01(act.p);
  const double loss = -(y * std::log(p) + (1 - y) * std::log(1 - p));

  const double d3 = act.p - y;
  g.b3 += d3;
  std::vector<double> d2(m.h2);
  for (int j = 0; j < m.h2; ++j) {
    g.w3[j] += d3 * act.a2[j];
    // tanh' in terms of the pre-dropout activation
    const double pre = drop2 && (*drop2)[j] != 0 ? act.a2[j] / (*drop2)[j]
                                                 : act.a2[j];
    const double mask = drop2 ? (*drop2)[j] : 1.0;
    d2[j] = d3 * m.w3[j] * mask * (1.0 - pre * pre);
  }
  std::vector<double> d1(m.h1, 0);
  for (int j = 0; j < m.h2; ++j) {
    g.b2[j] += d2[j];
    for (int k = 0; k < m.h1; ++k) {
      g.w2[j * m.h1 + k] += d2[j] * act.a1[k];
      d1[k] += d2[j] * m.w2[j * m.h1 + k];
    }
  }
  for (int k = 0; k < m.h1; ++k) {
    const double pre = drop1 && (*drop1)[k] != 0 ? act.a1[k] / (*drop1)[k]
                                                 : act.a1[k];
    const double mask = drop1 ? (*drop1)[k] : 1.0;
    d1[k] *= mask * (1.0 - pre * pre);
    g.b1[k] += d1[k];
    for (int f = 0; f < m.d_in; ++f) g.w1[k * m.d_in + f] += d1[k] * x[f];
  }
  return loss;
}

std::unique_ptr<MlpModel> fit_mlp(const LearnerSpec& spec,
                                  const TrainMatrix& data) {
  auto model = std::make_unique<MlpModel>();
  model->d_in = static_cast<int>(data.names.size());
  model->h1 = static_cast<int>(spec.get("hidden1", 64));
  model->h2 = static_cast<int>(spec.get("hidden2", 32));
  model->w1.assign(static_cast<std::size_t>(model->h1) * model->d_in, 0);
  model->b1.assign(model->h1, 0);
  model->w2.assign(static_cast<std::size_t>(model->h2) * model->h1, 0);
  model->b2.assign(model->h2, 0);
  model->w3.assign(model->h2, 0);
  model->b3 = prior_log_odds(data.labels);

  std::mt19937_64 init_rng(sub_seed(spec.seed, 'I'));
  auto glorot = [&](std::vector<double>& w, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& v : w) v = u(init_rng);
  };
  glorot(model->w1, model->d_in, model->h1);
  glorot(model->w2, model->h1, model->h2);
  glorot(model->w3, model->h2, 1);

  Standardizer std_;
  std_.fit(data.rows);
  std::vector<std::vector<double>> X;
  for (const auto& row : data.rows) X.push_back(std_.apply(row));

  const int epochs = static_cast<int>(spec.get("epochs", 200));
  const int batch_size = std::max(1, static_cast<int>(spec.get("batch_size", 32)));
  const double dropout = spec.get("dropout", 0.2);
  const double lr = spec.get("learning_rate", 2e-5);
  const std::size_t n = X.size();

  std::vector<double*> params;
  for (auto& v : model->w1) params.push_back(&v);
  for (auto& v : model->b1) params.push_back(&v);
  for (auto& v : model->w2) params.push_back(&v);
  for (auto& v : model->b2) params.push_back(&v);
  for (auto& v : model->w3) params.push_back(&v);
  params.push_back(&model->b3);
  Adam adam(params.size(), lr);

  std::mt19937_64 drop_rng(sub_seed(spec.seed, 'D'));
  std::uniform_real_distribution<double> u01(0, 1);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> drop1(model->h1), drop2(model->h2);
  const double keep = 1.0 - dropout;

  for (int e = 0; e < epochs; ++e) {
    seeded_shuffle(idx, sub_seed(spec.seed, 'E', e));
    double epoch_loss = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t stop = std::min(n, start + batch_size);
      MlpGrads g(*model);
      for (std::size_t b = start; b < stop; ++b) {
        if (dropout > 0) {
          for (auto& v : drop1) v = u01(drop_rng) < keep ? 1.0 / keep : 0.0;
          for (auto& v : drop2) v = u01(drop_rng) < keep ? 1.0 / keep : 0.0;
        }
        epoch_loss += mlp_backward(*model, X[idx[b]], data.labels[idx[b]],
                                   dropout > 0 ? &drop1 : nullptr,
                                   dropout > 0 ? &drop2 : nullptr, g);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      std::vector<double> grad;
      grad.reserve(params.size());
      for (double v : g.w1) grad.push_back(v * inv);
      for (double v : g.b1) grad.push_back(v * inv);
      for (double v : g.w2) grad.push_back(v * inv);
      for (double v : g.b2) grad.push_back(v * inv);
      for (double v : g.w3) grad.push_back(v * inv);
      grad.push_back(g.b3 * inv);
      adam.step(params, grad);
    }
    model->epoch_losses.push_back(epoch_loss / static_cast<double>(n));
  }
  return model;
}

}  // namespace

double MlpModel::score_impl(const std::vector<double>& row) const {
  return mlp_forward(*this, row, nullptr, nullptr).p;
}

nlohmann::json MlpModel::payload_json() const {
  return {{"d_in", d_in}, {"h1", h1},   {"h2", h2}, {"w1", w1}, {"b1", b1},
          {"w2", w2},     {"b2", b2},   {"w3", w3}, {"b3", b3}};
}

void MlpModel::load_payload(const nlohmann::json& j) {
  d_in = j.at("d_in").get<int>();
  h1 = j.at("h1").get<int>();
  h2 = j.at("h2").get<int>();
  w1 = j.at("w1").get<std::vector<double>>();
  b1 = j.at("b1").get<std::vector<double>>();
  w2 = j.at("w2").get<std::vector<double>>();
  b2 = j.at("b2").get<std::vector<double>>();
  w3 = j.at("w3").get<std::vector<double>>();
  b3 = j.at("b3").get<double>();
}

double mlp_gradient_check(const TrainedModel& model,
                          const std::vector<double>& row, int label) {
  const auto* mlp = dynamic_cast<const MlpModel*>(&model);
  if (!mlp) throw std::invalid_argument("gradient check needs an MLP model");
  const std::vector<double> x = model.standardizer().mean.empty()
                                    ? row
                                    : model.standardizer().apply(row);

  MlpGrads g(*mlp);
  mlp_backward(*mlp, x, label, nullptr, nullptr, g);
  std::vector<double> analytic;
  for (double v : g.w1) analytic.push_back(v);
  for (double v : g.b1) analytic.push_back(v);
  for (double v : g.w2) analytic.push_back(v);
  for (double v : g.b2) analytic.push_back(v);
  for (double v : g.w3) analytic.push_back(v);
  analytic.push_back(g.b3);

  MlpModel probe = *mlp;
  std::vector<double*> params;
  for (auto& v : probe.w1) params.push_back(&v);
  for (auto& v : probe.b1) params.push_back(&v);
  for (auto& v : probe.w2) params.push_back(&v);
  for (auto& v : probe.b2) params.push_back(&v);
  for (auto& v : probe.w3) params.push_back(&v);
  params.push_back(&probe.b3);

  auto loss = [&]() {
    const double p = clamp01(mlp_forward(probe, x, nullptr, nullptr).p);
    return -(label * std::log(p) + (1 - label) * std::log(1 - p));
  };

  const double h = 1e-5;
  double max_rel = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = *params[i];
    *params[i] = orig + h;
    const double lp = loss();
    *params[i] = orig - h;
    const double lm = loss();
    *params[i] = orig;
    const double numeric = (lp - lm) / (2 * h);
    const double denom =
        std::max({1e-3, std::abs(analytic[i]), std::abs(numeric)});
    max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

// ---------------------------------------------------------------------------

std::unique_ptr<TrainedModel> fit(const LearnerSpec& spec,
                                  const TrainMatrix& data) {
  validate_training_data(data);
  std::unique_ptr<TrainedModel> model;
  bool standardize = false;
  switch (spec.kind) {
    case LearnerKind::LogisticRegression: {
      auto m = fit_logistic(spec, data);
      model = std::move(m);
      standardize = true;
      break;
    }
    case LearnerKind::DecisionTree:
      model = fit_tree(spec, data);
      break;
    case LearnerKind::RandomForest:
      model = fit_forest(spec, data);
      break;
    case LearnerKind::GradientBoostedTrees:
      model = fit_gbt(spec, data);
      break;
    case LearnerKind::Mlp:
      model = fit_mlp(spec, data);
      standardize = true;
      break;
  }
  model->spec_ = spec;
  model->names_ = data.names;
  if (standardize) model->standardizer_.fit(data.rows);
  return model;
}

std::unique_ptr<TrainedModel> fit(const LearnerSpec& spec,
                                  const std::vector<Sample>& samples) {
  return fit(spec, to_matrix(samples));
}

}  // namespace scp
