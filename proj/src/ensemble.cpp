#include "scp/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "scp/rng.hpp"

namespace scp {
namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

double quantile_at(const std::vector<double>& sorted, double q) {
  const auto n = static_cast<double>(sorted.size());
  auto idx = static_cast<std::int64_t>(std::ceil(q * n)) - 1;
  idx = std::clamp<std::int64_t>(idx, 0, sorted.size() - 1);
  return sorted[static_cast<std::size_t>(idx)];
}

}  // namespace

const char* vote_strategy_name(VoteStrategy s) {
  switch (s) {
    case VoteStrategy::Max: return "max";
    case VoteStrategy::Mean: return "mean";
    case VoteStrategy::Median: return "median";
    case VoteStrategy::Stacking: return "stacking";
  }
  return "max";
}

const char* meta_kind_name(MetaKind k) {
  switch (k) {
    case MetaKind::Linear: return "linear";
    case MetaKind::Logistic: return "logistic";
    case MetaKind::Gbt: return "gbt";
  }
  return "linear";
}

std::optional<std::pair<VoteStrategy, MetaKind>> parse_strategy(
    const std::string& s) {
  if (s == "max") return {{VoteStrategy::Max, MetaKind::Linear}};
  if (s == "mean") return {{VoteStrategy::Mean, MetaKind::Linear}};
  if (s == "median") return {{VoteStrategy::Median, MetaKind::Linear}};
  if (s == "stacking-linear") return {{VoteStrategy::Stacking, MetaKind::Linear}};
  if (s == "stacking-logistic")
    return {{VoteStrategy::Stacking, MetaKind::Logistic}};
  if (s == "stacking-gbt") return {{VoteStrategy::Stacking, MetaKind::Gbt}};
  return std::nullopt;
}

double ensemble_proba(const std::vector<double>& member_probs,
                      VoteStrategy strategy) {
  if (member_probs.empty())
    throw std::invalid_argument("no member probabilities");
  switch (strategy) {
    case VoteStrategy::Max:
      return *std::max_element(member_probs.begin(), member_probs.end());
    case VoteStrategy::Mean: {
      double sum = 0;
      for (double p : member_probs) sum += p;
      return sum / static_cast<double>(member_probs.size());
    }
    case VoteStrategy::Median: {
      std::vector<double> sorted = member_probs;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t n = sorted.size();
      return n % 2 ? sorted[n / 2]
                   : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    }
    case VoteStrategy::Stacking:
      throw std::invalid_argument(
          "stacking combines through EnsembleModel::score");
  }
  return 0;
}

double StackingMeta::score(const std::vector<double>& member_probs) const {
  if (kind == MetaKind::Linear) {
    double z = intercept;
    for (std::size_t i = 0; i < weights.size(); ++i)
      z += weights[i] * member_probs[i];
    return std::clamp(z, 0.0, 1.0);
  }
  return model->score(member_probs);
}

const std::vector<std::string>& EnsembleModel::feature_names() const {
  if (members.empty()) throw std::logic_error("ensemble has no members");
  return members.front()->feature_names();
}

std::vector<double> EnsembleModel::member_scores(
    const std::vector<double>& row) const {
  std::vector<double> probs;
  probs.reserve(members.size());
  for (const auto& m : members) probs.push_back(m->score(row));
  return probs;
}

double EnsembleModel::score(const std::vector<double>& row) const {
  const auto probs = member_scores(row);
  if (strategy == VoteStrategy::Stacking) {
    if (!meta) throw std::logic_error("stacking ensemble lacks a meta model");
    return meta->score(probs);
  }
  return ensemble_proba(probs, strategy);
}

double EnsembleModel::predict_proba(const FeatureVector& fv) const {
  if (fv.schema->names != feature_names())
    throw std::invalid_argument(
        "feature names do not match the ensemble contract");
  return score(fv.values);
}

nlohmann::json EnsembleModel::to_json() const {
  nlohmann::json j;
  j["format"] = "scp-ensemble";
  j["strategy"] = vote_strategy_name(strategy);
  auto arr = nlohmann::json::array();
  for (const auto& m : members) arr.push_back(m->to_json());
  j["members"] = std::move(arr);
  if (!meta) {
    j["meta"] = nullptr;
  } else {
    nlohmann::json mj;
    mj["kind"] = meta_kind_name(meta->kind);
    if (meta->kind == MetaKind::Linear) {
      mj["weights"] = meta->weights;
      mj["intercept"] = meta->intercept;
    } else {
      mj["model"] = meta->model->to_json();
    }
    j["meta"] = std::move(mj);
  }
  return j;
}

EnsembleModel EnsembleModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "scp-ensemble")
    throw std::runtime_error("not an ensemble container");
  EnsembleModel out;
  const std::string strat = j.at("strategy").get<std::string>();
  bool found = false;
  for (VoteStrategy s : {VoteStrategy::Max, VoteStrategy::Mean,
                         VoteStrategy::Median, VoteStrategy::Stacking})
    if (strat == vote_strategy_name(s)) {
      out.strategy = s;
      found = true;
    }
  if (!found) throw std::runtime_error("unknown strategy " + strat);
  for (const auto& mj : j.at("members"))
    out.members.push_back(TrainedModel::from_json(mj));
  if (!j.at("meta").is_null()) {
    StackingMeta meta;
    const std::string mk = j["meta"].at("kind").get<std::string>();
    if (mk == meta_kind_name(MetaKind::Linear)) {
      meta.kind = MetaKind::Linear;
      meta.weights = j["meta"].at("weights").get<std::vector<double>>();
      meta.intercept = j["meta"].at("intercept").get<double>();
    } else {
      meta.kind = mk == meta_kind_name(MetaKind::Logistic) ? MetaKind::Logistic
                                                           : MetaKind::Gbt;
      meta.model = TrainedModel::from_json(j["meta"].at("model"));
    }
    out.meta = std::move(meta);
  }
  return out;
}

EnsembleModel make_voting(
    std::vector<std::shared_ptr<const TrainedModel>> members,
    VoteStrategy strategy) {
  if (members.size() < 2)
    throw std::invalid_argument("ensemble needs >= 2 members");
  if (strategy == VoteStrategy::Stacking)
    throw std::invalid_argument("use fit_stacking for stacking ensembles");
  EnsembleModel out;
  out.members = std::move(members);
  out.strategy = strategy;
  return out;
}

namespace {

// Ridge-stabilized least squares on [probs, 1]; tiny systems only.
void fit_linear_meta(const std::vector<std::vector<double>>& probs,
                     const std::vector<int>& labels, StackingMeta& meta) {
  const std::size_t m = probs[0].size(), d = m + 1;
  std::vector<std::vector<double>> a(d, std::vector<double>(d + 1, 0));
  for (std::size_t i = 0; i < probs.size(); ++i) {
    std::vector<double> x(probs[i]);
    x.push_back(1.0);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) a[r][c] += x[r] * x[c];
      a[r][d] += x[r] * labels[i];
    }
  }
  for (std::size_t r = 0; r < d; ++r) a[r][r] += 1e-9;
  for (std::size_t col = 0; col < d; ++col) {  // gaussian elimination
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < d; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < d; ++r) {
      if (r == col || a[col][col] == 0) continue;
      const double factor = a[r][col] / a[col][col];
      for (std::size_t c = col; c <= d; ++c) a[r][c] -= factor * a[col][c];
    }
  }
  meta.weights.assign(m, 0);
  for (std::size_t r = 0; r < m; ++r)
    meta.weights[r] = a[r][r] == 0 ? 0 : a[r][d] / a[r][r];
  meta.intercept = a[m][m] == 0 ? 0 : a[m][d] / a[m][m];
}

}  // namespace

EnsembleModel fit_stacking(
    std::vector<std::shared_ptr<const TrainedModel>> members,
    const TrainMatrix& train, MetaKind meta_kind, int folds,
    std::uint64_t seed, std::vector<std::string>* warnings) {
  if (members.size() < 2)
    throw std::invalid_argument("stacking needs >= 2 members");
  const std::size_t n = train.rows.size();
  std::size_t n_pos = 0;
  for (int y : train.labels) n_pos += y;
  const std::size_t n_neg = n - n_pos;
  if (n_pos < 3 || n_neg < 3)
    throw std::invalid_argument("stacking needs >= 3 samples per label");
  const int max_folds = static_cast<int>(std::min(n_pos, n_neg));
  if (folds > max_folds) {
    folds = std::max(2, max_folds);
    if (warnings)
      warnings->push_back("stacking folds reduced to " +
                          std::to_string(folds) + " (scarce labels)");
  }
  folds = std::max(2, folds);

  // Stratified fold assignment: shuffle each class, deal round-robin.
  std::vector<int> fold_of(n, 0);
  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (train.labels[i] == label) idx.push_back(i);
    seeded_shuffle(idx, sub_seed(seed, 'K', label));
    for (std::size_t j = 0; j < idx.size(); ++j)
      fold_of[idx[j]] = static_cast<int>(j % folds);
  }

  // Out-of-fold member probabilities.
  std::vector<std::vector<double>> oof(n,
                                       std::vector<double>(members.size(), 0));
  for (int fold = 0; fold < folds; ++fold) {
    TrainMatrix part;
    part.names = train.names;
    for (std::size_t i = 0; i < n; ++i) {
      if (fold_of[i] == fold) continue;
      part.rows.push_back(train.rows[i]);
      part.labels.push_back(train.labels[i]);
    }
    for (std::size_t mi = 0; mi < members.size(); ++mi) {
      LearnerSpec spec = members[mi]->spec();
      spec.seed = sub_seed(seed, 'O', fold, mi);
      auto fitted = fit(spec, part);
      for (std::size_t i = 0; i < n; ++i)
        if (fold_of[i] == fold) oof[i][mi] = fitted->score(train.rows[i]);
    }
  }

  StackingMeta meta;
  meta.kind = meta_kind;
  if (meta_kind == MetaKind::Linear) {
    fit_linear_meta(oof, train.labels, meta);
  } else {
    TrainMatrix mdata;
    for (const auto& m : members)
      mdata.names.push_back(learner_kind_name(m->spec().kind));
    mdata.rows = oof;
    mdata.labels = train.labels;
    LearnerSpec mspec =
        default_spec(meta_kind == MetaKind::Logistic
                         ? LearnerKind::LogisticRegression
                         : LearnerKind::GradientBoostedTrees,
                     sub_seed(seed, 'Z'));
    meta.model = fit(mspec, mdata);
  }

  EnsembleModel out;
  out.members = std::move(members);
  out.strategy = VoteStrategy::Stacking;
  out.meta = std::move(meta);
  return out;
}

std::string score_set_hash(const std::vector<double>& scores) {
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : sorted) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

ThresholdPolicy calibrate_threshold(const std::vector<double>& negative_scores,
                                    double target_far) {
  if (negative_scores.size() < 5)
    throw std::invalid_argument("need >= 5 negative scores to calibrate");
  if (!(target_far >= 0 && target_far <= 1))
    throw std::invalid_argument("target FAR must lie in [0,1]");
  std::vector<double> grid = negative_scores;
  grid.push_back(0);
  grid.push_back(1);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  const auto n = static_cast<double>(negative_scores.size());
  ThresholdPolicy policy;
  policy.target_far = target_far;
  policy.calibration_set_id = score_set_hash(negative_scores);
  for (double t : grid) {
    std::size_t above = 0;
    for (double s : negative_scores) above += s > t;
    if (static_cast<double>(above) / n <= target_far) {
      policy.p_thres = t;
      return policy;
    }
  }
  policy.p_thres = 1.0;  // unreachable: t = max score always satisfies
  return policy;
}

HybridOutput hybrid_predict(double pc_prob, double sc1_prob, double sc2_prob,
                            const ModelBundle& bundle) {
  HybridOutput out;
  out.prob = std::max({pc_prob, sc1_prob, sc2_prob});
  out.label = pc_prob > bundle.pc.policy.p_thres ||
                      sc1_prob > bundle.sc1.policy.p_thres ||
                      sc2_prob > bundle.sc2.policy.p_thres
                  ? 1
                  : 0;
  return out;
}

ModelBundle calibrate_hybrid(ModelBundle bundle,
                             const std::vector<HybridSample>& validation,
                             double target_far) {
  std::vector<double> neg_pc, neg_sc1, neg_sc2;
  for (const auto& v : validation) {
    if (v.label) continue;
    neg_pc.push_back(v.pc_prob);
    neg_sc1.push_back(v.sc1_prob);
    neg_sc2.push_back(v.sc2_prob);
  }
  if (neg_pc.empty())
    throw std::invalid_argument("hybrid calibration needs negative samples");
  std::sort(neg_pc.begin(), neg_pc.end());
  std::sort(neg_sc1.begin(), neg_sc1.end());
  std::sort(neg_sc2.begin(), neg_sc2.end());

  const double base[3] = {bundle.pc.policy.p_thres, bundle.sc1.policy.p_thres,
                          bundle.sc2.policy.p_thres};
  const std::vector<double>* scores[3] = {&neg_pc, &neg_sc1, &neg_sc2};
  double q0[3];
  for (int m = 0; m < 3; ++m) {
    const auto& s = *scores[m];
    q0[m] = static_cast<double>(
                std::upper_bound(s.begin(), s.end(), base[m]) - s.begin()) /
            static_cast<double>(s.size());
  }

  auto thresholds_at = [&](double delta, double out[3]) {
    for (int m = 0; m < 3; ++m) {
      const double q = q0[m] + delta * (1.0 - q0[m]);
      out[m] = std::max(base[m], quantile_at(*scores[m], q));
    }
  };
  auto far_at = [&](double delta) {
    double t[3];
    thresholds_at(delta, t);
    std::size_t alarms = 0, negs = 0;
    for (const auto& v : validation) {
      if (v.label) continue;
      ++negs;
      alarms += v.pc_prob > t[0] || v.sc1_prob > t[1] || v.sc2_prob > t[2];
    }
    return static_cast<double>(alarms) / static_cast<double>(negs);
  };

  double delta = 0;
  if (far_at(0) > target_far) {
    if (far_at(1) > target_far)
      throw std::runtime_error("hybrid FAR target unreachable");
    double lo = 0, hi = 1;
    for (int iter = 0; iter < 50; ++iter) {
      const double mid = 0.5 * (lo + hi);
      (far_at(mid) > target_far ? lo : hi) = mid;
    }
    delta = hi;
  }
  double t[3];
  thresholds_at(delta, t);
  bundle.pc.policy.p_thres = t[0];
  bundle.sc1.policy.p_thres = t[1];
  bundle.sc2.policy.p_thres = t[2];
  bundle.hybrid_far_target = target_far;
  return bundle;
}

CorrelationReport member_correlation_report(
    const EnsembleModel& ensemble, const std::vector<Sample>& samples) {
  if (ensemble.members.size() < 2)
    throw std::invalid_argument("correlation report needs >= 2 members");
  if (samples.empty()) throw std::invalid_argument("no samples");
  const std::size_t m = ensemble.members.size(), n = samples.size();
  if (samples.front().features.schema->names != ensemble.feature_names())
    throw std::invalid_argument("samples do not match the ensemble contract");

  std::vector<std::vector<double>> probs(m, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = ensemble.member_scores(samples[i].features.values);
    for (std::size_t k = 0; k < m; ++k) probs[k][i] = p[k];
  }

  CorrelationReport report;
  report.constant_member.assign(m, 0);
  std::vector<double> mean(m, 0), sd(m, 0);
  for (std::size_t k = 0; k < m; ++k) {
    report.names.push_back(learner_kind_name(ensemble.members[k]->spec().kind));
    for (double v : probs[k]) mean[k] += v;
    mean[k] /= static_cast<double>(n);
    for (double v : probs[k]) sd[k] += (v - mean[k]) * (v - mean[k]);
    sd[k] = std::sqrt(sd[k] / static_cast<double>(n));
    if (sd[k] < 1e-15) report.constant_member[k] = 1;
  }
  report.matrix.assign(m, std::vector<double>(m, 0));
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      if (a == b) {
        report.matrix[a][b] = 1.0;
        continue;
      }
      if (report.constant_member[a] || report.constant_member[b]) {
        report.matrix[a][b] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      double cov = 0;
      for (std::size_t i = 0; i < n; ++i)
        cov += (probs[a][i] - mean[a]) * (probs[b][i] - mean[b]);
      cov /= static_cast<double>(n);
      report.matrix[a][b] = cov / (sd[a] * sd[b]);
    }
  return report;
}

namespace {

nlohmann::json policy_json(const ThresholdPolicy& p) {
  return {{"p_thres", p.p_thres},
          {"target_far", p.target_far},
          {"calibration_set", p.calibration_set_id}};
}

ThresholdPolicy policy_from_json(const nlohmann::json& j) {
  ThresholdPolicy p;
  p.p_thres = j.at("p_thres").get<double>();
  p.target_far = j.at("target_far").get<double>();
  p.calibration_set_id = j.at("calibration_set").get<std::string>();
  return p;
}

}  // namespace

void save_bundle(const std::string& dir, const ModelBundle& bundle) {
  std::filesystem::create_directories(dir);
  const CalibratedEnsemble* parts[3] = {&bundle.pc, &bundle.sc1, &bundle.sc2};
  const char* names[3] = {"pc", "sc1", "sc2"};
  nlohmann::json thresholds;
  thresholds["version"] = bundle.version;
  thresholds["hybrid_far_target"] = bundle.hybrid_far_target;
  thresholds["window_count"] = bundle.window_count;
  auto& models = thresholds["models"] = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    nlohmann::json j;
    j["ensemble"] = parts[i]->model.to_json();
    j["policy"] = policy_json(parts[i]->policy);
    write_json_file(dir + "/" + names[i] + "_model.json", j);
    nlohmann::json row = policy_json(parts[i]->policy);
    row["model_kind"] = i == 0 ? "PC" : (i == 1 ? "SC1" : "SC2");
    models.push_back(std::move(row));
  }
  write_json_file(dir + "/thresholds.json", thresholds);
}

ModelBundle load_bundle(const std::string& dir) {
  ModelBundle bundle;
  CalibratedEnsemble* parts[3] = {&bundle.pc, &bundle.sc1, &bundle.sc2};
  const char* names[3] = {"pc", "sc1", "sc2"};
  for (int i = 0; i < 3; ++i) {
    const auto j = read_json_file(dir + "/" + names[i] + "_model.json");
    parts[i]->model = EnsembleModel::from_json(j.at("ensemble"));
    parts[i]->policy = policy_from_json(j.at("policy"));
  }
  const auto t = read_json_file(dir + "/thresholds.json");
  bundle.version = t.at("version").get<int>();
  bundle.hybrid_far_target = t.at("hybrid_far_target").get<double>();
  bundle.window_count = t.at("window_count").get<int>();
  return bundle;
}

}  // namespace scp
