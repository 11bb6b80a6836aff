#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "scp/ensemble.hpp"
#include "scp/evaluation.hpp"
#include "test_support.hpp"

using namespace scp;
using namespace scp::test;

namespace {

// Independent re-statement of the published hash: FNV-1a 64 over the
// little-endian bytes of the sorted scores.
std::string fnv_oracle(std::vector<double> scores) {
  std::sort(scores.begin(), scores.end());
  std::uint64_t h = 14695981039346656037ULL;
  for (double v : scores) {
    unsigned char bytes[8];
    std::memcpy(bytes, &v, 8);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

double far_of(const std::vector<double>& negatives, double t) {
  std::size_t above = 0;
  for (double s : negatives) above += s > t;
  return static_cast<double>(above) / static_cast<double>(negatives.size());
}

std::shared_ptr<const TrainedModel> fit_shared(LearnerSpec spec,
                                               const TrainMatrix& data) {
  return std::shared_ptr<const TrainedModel>(fit(spec, data));
}

LearnerSpec small_spec(LearnerKind kind, std::uint64_t seed) {
  auto spec = default_spec(kind, seed);
  if (spec.params.count("n_estimators")) spec.params["n_estimators"] = 25;
  return spec;
}

}  // namespace

TEST_CASE("voting rules reduce member probabilities exactly") {
  CHECK(ensemble_proba({0.2, 0.8, 0.5}, VoteStrategy::Max) == 0.8);
  CHECK(ensemble_proba({0.2, 0.8, 0.5}, VoteStrategy::Mean) == 0.5);
  CHECK(ensemble_proba({0.2, 0.8, 0.5}, VoteStrategy::Median) == 0.5);
  CHECK(ensemble_proba({0.9}, VoteStrategy::Median) == 0.9);
  // Even count: median averages the middle pair.
  CHECK(ensemble_proba({0.2, 0.4, 0.6, 0.9}, VoteStrategy::Median) == 0.5);
  CHECK_THROWS(ensemble_proba({}, VoteStrategy::Max));
  CHECK_THROWS(ensemble_proba({0.5, 0.5}, VoteStrategy::Stacking));
}

TEST_CASE("strategy names round-trip through the parser") {
  CHECK(parse_strategy("max") == std::pair{VoteStrategy::Max, MetaKind::Linear});
  CHECK(parse_strategy("median")->first == VoteStrategy::Median);
  auto sg = parse_strategy("stacking-gbt");
  REQUIRE(sg);
  CHECK(sg->first == VoteStrategy::Stacking);
  CHECK(sg->second == MetaKind::Gbt);
  CHECK(parse_strategy("stacking-logistic")->second == MetaKind::Logistic);
  CHECK(!parse_strategy("Max"));       // case-sensitive
  CHECK(!parse_strategy("stacking"));  // meta kind required
}

TEST_CASE("threshold calibration picks known hand-worked values") {
  std::vector<double> negs = {0.1, 0.2, 0.3, 0.4, 0.5,
                              0.6, 0.7, 0.8, 0.9, 1.0};
  auto policy = calibrate_threshold(negs, 0.20);
  // 0.8 leaves exactly {0.9, 1.0} above: FAR 0.2.  0.7 leaves three: 0.3.
  CHECK(policy.p_thres == 0.8);
  CHECK(policy.target_far == 0.20);
  CHECK(policy.calibration_set_id == score_set_hash(negs));

  CHECK(calibrate_threshold(negs, 0.0).p_thres == 1.0);
  CHECK(calibrate_threshold(negs, 1.0).p_thres == 0.0);

  std::vector<double> ties = {0.3, 0.3, 0.3, 0.3, 0.3};
  CHECK(calibrate_threshold(ties, 0.20).p_thres == 0.3);

  CHECK_THROWS(calibrate_threshold({0.1, 0.2, 0.3, 0.4}, 0.2));
  CHECK_THROWS(calibrate_threshold(negs, -0.1));
  CHECK_THROWS(calibrate_threshold(negs, 1.5));
}

TEST_CASE("calibrated threshold is the smallest feasible grid value") {
  std::mt19937_64 rng(404);
  for (int rep = 0; rep < 60; ++rep) {
    std::vector<double> negs;
    const int n = 5 + static_cast<int>(rng() % 60);
    for (int i = 0; i < n; ++i)
      negs.push_back(static_cast<double>(rng() % 17) / 16.0);  // heavy ties
    const double target = static_cast<double>(rng() % 101) / 100.0;
    auto policy = calibrate_threshold(negs, target);

    CHECK(far_of(negs, policy.p_thres) <= target);
    std::vector<double> grid = negs;
    grid.push_back(0);
    grid.push_back(1);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    CHECK(std::count(grid.begin(), grid.end(), policy.p_thres) == 1);
    for (double t : grid) {
      if (t >= policy.p_thres) break;
      CHECK(far_of(negs, t) > target);
    }
  }
}

TEST_CASE("score-set hash matches an independent statement of the algorithm") {
  std::vector<double> scores = {0.75, 0.125, 0.5, 0.125};
  CHECK(score_set_hash(scores) == fnv_oracle(scores));
  CHECK(score_set_hash({}) == fnv_oracle({}));

  // Order-independent; value-sensitive.
  CHECK(score_set_hash({0.5, 0.125, 0.75, 0.125}) == score_set_hash(scores));
  CHECK(score_set_hash({0.75, 0.125, 0.5, 0.25}) != score_set_hash(scores));
  CHECK(score_set_hash(scores).size() == 16);
}

TEST_CASE("voting ensemble applies its rule over live members") {
  auto data = make_blobs(40, 3, 3.0, 8);
  auto lr = fit_shared(default_spec(LearnerKind::LogisticRegression, 1), data);
  auto dt = fit_shared(default_spec(LearnerKind::DecisionTree, 2), data);
  auto ens = make_voting({lr, dt}, VoteStrategy::Max);

  CHECK(ens.feature_names() == lr->feature_names());
  for (const auto& row : data.rows) {
    auto probs = ens.member_scores(row);
    REQUIRE(probs.size() == 2);
    CHECK(probs[0] == lr->score(row));
    CHECK(probs[1] == dt->score(row));
    CHECK(ens.score(row) == std::max(probs[0], probs[1]));
  }

  auto schema = std::make_shared<FeatureSchema>();
  schema->names = data.names;
  FeatureVector fv;
  fv.schema = schema;
  fv.values = data.rows[0];
  CHECK(ens.predict_proba(fv) == ens.score(data.rows[0]));

  auto wrong = std::make_shared<FeatureSchema>();
  wrong->names = {"f1", "f0", "extra"};
  FeatureVector bad;
  bad.schema = wrong;
  bad.values = {0.0, 0.0, 0.0};
  CHECK_THROWS(ens.predict_proba(bad));
}

TEST_CASE("stacking fits a meta layer over out-of-fold member scores") {
  auto data = make_blobs(50, 3, 2.5, 21);
  std::vector<std::shared_ptr<const TrainedModel>> members = {
      fit_shared(default_spec(LearnerKind::LogisticRegression, 1), data),
      fit_shared(default_spec(LearnerKind::DecisionTree, 2), data),
      fit_shared(small_spec(LearnerKind::RandomForest, 3), data)};

  std::vector<std::string> warnings;
  auto ens = fit_stacking(members, data, MetaKind::Linear, 5, 7, &warnings);
  CHECK(warnings.empty());
  CHECK(ens.strategy == VoteStrategy::Stacking);
  REQUIRE(ens.meta.has_value());
  CHECK(ens.meta->kind == MetaKind::Linear);
  CHECK(ens.meta->weights.size() == members.size());

  std::vector<double> scores;
  for (const auto& row : data.rows) {
    double s = ens.score(row);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    CHECK(s == ens.meta->score(ens.member_scores(row)));
    scores.push_back(s);
  }
  CHECK(auc(scores, data.labels) >= 0.95);
}

TEST_CASE("stacking shrinks the fold count when positives are scarce") {
  auto data = make_blobs(40, 2, 2.0, 33);
  // Keep three positives only.
  TrainMatrix scarce;
  scarce.names = data.names;
  int kept_pos = 0;
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    if (data.labels[i] == 1 && ++kept_pos > 3) continue;
    scarce.rows.push_back(data.rows[i]);
    scarce.labels.push_back(data.labels[i]);
  }
  std::vector<std::shared_ptr<const TrainedModel>> members = {
      fit_shared(default_spec(LearnerKind::LogisticRegression, 1), scarce),
      fit_shared(default_spec(LearnerKind::DecisionTree, 2), scarce)};
  std::vector<std::string> warnings;
  auto ens = fit_stacking(members, scarce, MetaKind::Linear, 5, 7, &warnings);
  REQUIRE(!warnings.empty());
  CHECK(warnings.front().find("fold") != std::string::npos);
  REQUIRE(ens.meta.has_value());
}

TEST_CASE("hybrid prediction ORs the alarms and maxes the probabilities") {
  ModelBundle bundle;
  bundle.pc.policy.p_thres = 0.5;
  bundle.sc1.policy.p_thres = 0.6;
  bundle.sc2.policy.p_thres = 0.7;

  auto quiet = hybrid_predict(0.3, 0.2, 0.1, bundle);
  CHECK(quiet.label == 0);
  CHECK(quiet.prob == 0.3);

  // Equality sits on the quiet side of every strict threshold.
  CHECK(hybrid_predict(0.5, 0.6, 0.7, bundle).label == 0);

  CHECK(hybrid_predict(0.51, 0.0, 0.0, bundle).label == 1);
  CHECK(hybrid_predict(0.0, 0.61, 0.0, bundle).label == 1);
  auto loud = hybrid_predict(0.1, 0.2, 0.71, bundle);
  CHECK(loud.label == 1);
  CHECK(loud.prob == 0.71);
}

TEST_CASE("hybrid calibration raises thresholds until the alarm budget holds") {
  ModelBundle bundle;
  bundle.pc.policy.p_thres = 0.30;
  bundle.sc1.policy.p_thres = 0.30;
  bundle.sc2.policy.p_thres = 0.30;

  // Negatives alarm through different models, so the OR overshoots the
  // per-model FAR the base thresholds were calibrated for.
  std::vector<HybridSample> validation;
  std::mt19937_64 rng(99);
  auto u = [&] { return static_cast<double>(rng() % 1000) / 1000.0; };
  for (int i = 0; i < 200; ++i) {
    HybridSample s;
    s.id = "N" + std::to_string(i);
    s.label = 0;
    s.pc_prob = u() * 0.6;
    s.sc1_prob = u() * 0.6;
    s.sc2_prob = u() * 0.6;
    validation.push_back(s);
  }
  for (int i = 0; i < 40; ++i) {
    HybridSample s;
    s.id = "P" + std::to_string(i);
    s.label = 1;
    s.pc_prob = 0.5 + u() * 0.5;
    s.sc1_prob = 0.5 + u() * 0.5;
    s.sc2_prob = 0.5 + u() * 0.5;
    validation.push_back(s);
  }

  auto hybrid_far = [&](const ModelBundle& b) {
    std::size_t alarms = 0, negs = 0;
    for (const auto& v : validation) {
      if (v.label) continue;
      ++negs;
      alarms += hybrid_predict(v.pc_prob, v.sc1_prob, v.sc2_prob, b).label;
    }
    return static_cast<double>(alarms) / static_cast<double>(negs);
  };
  REQUIRE(hybrid_far(bundle) > 0.20);

  auto tuned = calibrate_hybrid(bundle, validation, 0.20);
  CHECK(hybrid_far(tuned) <= 0.20);
  CHECK(tuned.pc.policy.p_thres >= bundle.pc.policy.p_thres);
  CHECK(tuned.sc1.policy.p_thres >= bundle.sc1.policy.p_thres);
  CHECK(tuned.sc2.policy.p_thres >= bundle.sc2.policy.p_thres);

  // Already under budget: nothing moves.
  ModelBundle loose = bundle;
  loose.pc.policy.p_thres = loose.sc1.policy.p_thres =
      loose.sc2.policy.p_thres = 0.99;
  auto kept = calibrate_hybrid(loose, validation, 0.20);
  CHECK(kept.pc.policy.p_thres == 0.99);

  CHECK_THROWS(calibrate_hybrid(
      bundle, std::vector<HybridSample>{{"p", 1, 0.9, 0.9, 0.9}}, 0.2));
}

TEST_CASE("model bundles survive a save-load cycle bit-for-bit") {
  auto data = make_blobs(30, 3, 2.0, 55);
  auto probe = make_blobs(10, 3, 2.0, 56);

  auto make_part = [&](std::uint64_t seed) {
    CalibratedEnsemble part;
    part.model = make_voting(
        {fit_shared(default_spec(LearnerKind::LogisticRegression, seed), data),
         fit_shared(small_spec(LearnerKind::RandomForest, seed + 1), data)},
        VoteStrategy::Median);
    std::vector<double> negs;
    for (std::size_t i = 0; i < data.rows.size(); ++i)
      if (!data.labels[i]) negs.push_back(part.model.score(data.rows[i]));
    part.policy = calibrate_threshold(negs, 0.20);
    return part;
  };

  ModelBundle bundle;
  bundle.pc = make_part(1);
  bundle.sc1 = make_part(10);
  bundle.sc2 = make_part(20);
  bundle.hybrid_far_target = 0.15;
  bundle.window_count = 4;

  const auto dir =
      (std::filesystem::temp_directory_path() / "scp_bundle_test").string();
  std::filesystem::remove_all(dir);
  save_bundle(dir, bundle);
  auto loaded = load_bundle(dir);

  CHECK(loaded.hybrid_far_target == 0.15);
  CHECK(loaded.window_count == 4);
  CHECK(loaded.version == bundle.version);
  for (auto pick : {0, 1, 2}) {
    const auto& before = pick == 0 ? bundle.pc : pick == 1 ? bundle.sc1
                                                           : bundle.sc2;
    const auto& after = pick == 0 ? loaded.pc : pick == 1 ? loaded.sc1
                                                          : loaded.sc2;
    CHECK(after.model.strategy == before.model.strategy);
    CHECK(after.policy.p_thres == before.policy.p_thres);
    CHECK(after.policy.target_far == before.policy.target_far);
    CHECK(after.policy.calibration_set_id == before.policy.calibration_set_id);
    for (const auto& row : probe.rows)
      CHECK(after.model.score(row) == before.model.score(row));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("stacked ensembles serialize with their meta layer") {
  auto data = make_blobs(40, 2, 2.0, 71);
  std::vector<std::shared_ptr<const TrainedModel>> members = {
      fit_shared(default_spec(LearnerKind::LogisticRegression, 1), data),
      fit_shared(default_spec(LearnerKind::DecisionTree, 2), data)};
  auto ens = fit_stacking(members, data, MetaKind::Logistic, 4, 5);
  auto back = EnsembleModel::from_json(ens.to_json());
  CHECK(back.strategy == VoteStrategy::Stacking);
  REQUIRE(back.meta.has_value());
  CHECK(back.meta->kind == MetaKind::Logistic);
  for (const auto& row : data.rows) CHECK(back.score(row) == ens.score(row));
}

TEST_CASE("correlation report flags constant members with NaN rows") {
  auto data = make_blobs(30, 2, 2.0, 13);
  auto lr = fit_shared(default_spec(LearnerKind::LogisticRegression, 1), data);
  auto flat_spec = default_spec(LearnerKind::DecisionTree, 2);
  flat_spec.params["min_samples_split"] = 1e6;  // forces a single leaf
  auto flat = fit_shared(flat_spec, data);
  auto forest = fit_shared(small_spec(LearnerKind::RandomForest, 3), data);
  auto ens = make_voting({lr, flat, forest}, VoteStrategy::Mean);

  auto schema = std::make_shared<FeatureSchema>();
  schema->names = data.names;
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    Sample s;
    s.sample_id = "B" + std::to_string(i);
    s.label = data.labels[i];
    s.features.schema = schema;
    s.features.values = data.rows[i];
    samples.push_back(s);
  }

  auto report = member_correlation_report(ens, samples);
  REQUIRE(report.names.size() == 3);
  CHECK(report.names[0] == "LogisticRegression");
  CHECK(report.names[1] == "DecisionTree");
  CHECK(report.constant_member == std::vector<std::uint8_t>{0, 1, 0});
  CHECK(report.matrix[0][0] == 1.0);
  CHECK(std::isnan(report.matrix[0][1]));
  CHECK(std::isnan(report.matrix[1][2]));
  CHECK(report.matrix[0][2] == report.matrix[2][0]);
  CHECK(report.matrix[0][2] >= -1.0);
  CHECK(report.matrix[0][2] <= 1.0);
  CHECK(report.matrix[0][2] > 0.5);  // both track the same signal

  CHECK_THROWS(member_correlation_report(make_voting({lr}, VoteStrategy::Max),
                                         samples));
  CHECK_THROWS(member_correlation_report(ens, {}));
}
