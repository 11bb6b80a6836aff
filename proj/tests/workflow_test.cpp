#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "scp/features.hpp"
#include "scp/workflow.hpp"
#include "test_support.hpp"

using namespace scp;
using namespace scp::test;

namespace {

Sample make_sc_sample(ModelKind kind, std::string id, int label,
                      std::string matched, std::string source,
                      const FeatureVector& fv) {
  Sample s;
  s.sample_id = std::move(id);
  s.model_kind = kind;
  s.label = label;
  s.features = fv;
  s.meta.matched_case_id = std::move(matched);
  s.meta.source_crash_id = std::move(source);
  return s;
}

// Synthetic matched-group samples: per case, one SC1 case + `n1` controls and
// one SC2 case + `n2` instants; features are irrelevant to the split.
std::pair<std::vector<Sample>, std::vector<Sample>> make_sc_sets(int cases,
                                                                 int n1,
                                                                 int n2) {
  auto schema = std::make_shared<FeatureSchema>();
  schema->names = {"x"};
  FeatureVector fv;
  fv.schema = schema;
  fv.values = {0.0};
  std::vector<Sample> sc1, sc2;
  for (int c = 0; c < cases; ++c) {
    const std::string cid = "S" + std::to_string(c);
    sc1.push_back(make_sc_sample(ModelKind::SC1, "SC1-" + cid, 1, "", cid, fv));
    for (int k = 0; k < n1; ++k)
      sc1.push_back(make_sc_sample(ModelKind::SC1,
                                   "SC1-" + cid + "-N" + std::to_string(k), 0,
                                   "SC1-" + cid, "N" + std::to_string(k), fv));
    sc2.push_back(make_sc_sample(ModelKind::SC2, "SC2-" + cid, 1, "", cid, fv));
    for (int k = 0; k < n2; ++k)
      sc2.push_back(make_sc_sample(ModelKind::SC2,
                                   "SC2-" + cid + "-Wp" + std::to_string(k + 1),
                                   0, "SC2-" + cid, "", fv));
  }
  return {sc1, sc2};
}

std::string case_of(const Sample& s) {
  std::string base = s.label == 1 ? s.sample_id : s.meta.matched_case_id;
  return base.substr(base.find('-') + 1);  // strip the dataset prefix
}

}  // namespace

TEST_CASE("pipeline config survives a json round-trip") {
  PipelineConfig cfg;
  cfg.alpha = 0.5;
  cfg.window_count = 3;
  cfg.control_ratio = 2;
  cfg.split_fraction = 0.6;
  cfg.target_far = 0.1;
  cfg.strategy = VoteStrategy::Stacking;
  cfg.meta_kind = MetaKind::Gbt;
  cfg.stacking_folds = 4;
  cfg.alert_threshold = 0.8;
  cfg.seed = 777;

  auto j = pipeline_config_to_json(cfg);
  CHECK(j["strategy"] == "stacking-gbt");
  auto back = pipeline_config_from_json(j);
  CHECK(back.alpha == cfg.alpha);
  CHECK(back.window_count == cfg.window_count);
  CHECK(back.control_ratio == cfg.control_ratio);
  CHECK(back.split_fraction == cfg.split_fraction);
  CHECK(back.target_far == cfg.target_far);
  CHECK(back.strategy == VoteStrategy::Stacking);
  CHECK(back.meta_kind == MetaKind::Gbt);
  CHECK(back.stacking_folds == cfg.stacking_folds);
  CHECK(back.alert_threshold == cfg.alert_threshold);
  CHECK(back.seed == cfg.seed);

  PipelineConfig plain;
  plain.strategy = VoteStrategy::Median;
  CHECK(pipeline_config_to_json(plain)["strategy"] == "median");
  CHECK(pipeline_config_from_json(pipeline_config_to_json(plain)).strategy ==
        VoteStrategy::Median);

  // Partial files keep defaults; junk strategy and ranges are rejected.
  auto partial = pipeline_config_from_json({{"alpha", 0.75}});
  CHECK(partial.alpha == 0.75);
  CHECK(partial.window_count == kDefaultWindowCount);
  CHECK_THROWS(pipeline_config_from_json({{"strategy", "plurality"}}));
  CHECK_THROWS(pipeline_config_from_json({{"window_count", 0}}));
  CHECK_THROWS(pipeline_config_from_json({{"control_ratio", 0}}));

  const auto path =
      (std::filesystem::temp_directory_path() / "scp_cfg_test.json").string();
  std::ofstream(path) << j.dump(2);
  auto from_file = load_pipeline_config(path);
  CHECK(from_file.seed == 777);
  std::remove(path.c_str());
  CHECK_THROWS(load_pipeline_config(path));
}

TEST_CASE("shared split keeps each matched case on one side of both datasets") {
  auto [sc1, sc2] = make_sc_sets(14, 2, 2);
  auto [s1, s2] = split_sc_shared(sc1, sc2, 0.70, 11);

  CHECK(s1.train.size() + s1.test.size() == sc1.size());
  CHECK(s2.train.size() + s2.test.size() == sc2.size());
  CHECK(s1.split_fraction == 0.70);
  CHECK(s2.seed == 11);

  std::set<std::string> train_cases, test_cases;
  for (const auto& s : s1.train) train_cases.insert(case_of(s));
  for (const auto& s : s2.train) train_cases.insert(case_of(s));
  for (const auto& s : s1.test) test_cases.insert(case_of(s));
  for (const auto& s : s2.test) test_cases.insert(case_of(s));
  for (const auto& c : train_cases) CHECK(!test_cases.count(c));
  CHECK(train_cases.size() + test_cases.size() == 14);

  // Uniform group composition → a single stratum → an exact 10/4 case cut,
  // and every group travels whole: 3 sc1 rows + 3 sc2 rows per case.
  CHECK(train_cases.size() == 10);
  CHECK(s1.train.size() == 30);
  CHECK(s2.test.size() == 12);

  auto [r1, r2] = split_sc_shared(sc1, sc2, 0.70, 11);
  for (std::size_t i = 0; i < s1.train.size(); ++i)
    CHECK(r1.train[i].sample_id == s1.train[i].sample_id);
  for (std::size_t i = 0; i < s2.train.size(); ++i)
    CHECK(r2.train[i].sample_id == s2.train[i].sample_id);

  bool moved = false;
  for (std::uint64_t seed = 20; seed < 28 && !moved; ++seed) {
    auto [a1, a2] = split_sc_shared(sc1, sc2, 0.70, seed);
    moved = a1.train.size() != s1.train.size() ||
            a1.train.front().sample_id != s1.train.front().sample_id;
  }
  CHECK(moved);

  CHECK_THROWS(split_sc_shared(sc1, sc2, 0.0, 1));
  CHECK_THROWS(split_sc_shared(sc1, sc2, 1.0, 1));
  CHECK_THROWS(split_sc_shared({}, {}, 0.7, 1));
}

TEST_CASE("feature column selection carves the schema by group") {
  const auto st = st_schema(4);
  auto traffic = feature_columns(*st, false, false);
  auto with_weather = feature_columns(*st, true, false);
  auto with_geometry = feature_columns(*st, false, true);
  auto all = feature_columns(*st, true, true);
  CHECK(traffic.size() == 108);
  CHECK(with_weather.size() == 115);
  CHECK(with_geometry.size() == 129);
  CHECK(all.size() == st->names.size());
  for (int c : traffic) CHECK(parse_traffic_feature(st->names[c]).has_value());
  // Traffic block leads the schema, so its columns are exactly 0..107.
  for (std::size_t i = 0; i < traffic.size(); ++i)
    CHECK(traffic[i] == static_cast<int>(i));
  std::set<int> ww(with_weather.begin(), with_weather.end());
  CHECK(ww.count(st->index_of("Temperature")));
  CHECK(ww.count(st->index_of("Condition_Rain")));
  CHECK(!ww.count(st->index_of("Speed_Limit_center")));
  std::set<int> wg(with_geometry.begin(), with_geometry.end());
  CHECK(wg.count(st->index_of("Lane_Count_down")));
  CHECK(!wg.count(st->index_of("Humidity")));

  const auto pc = pc_schema();
  CHECK(feature_columns(*pc, false, false).size() == 27);
  CHECK(feature_columns(*pc, true, true).size() == 55);
}

TEST_CASE("masking rewrites samples onto the narrowed schema") {
  auto schema = std::make_shared<FeatureSchema>();
  schema->names = {"a", "b", "c", "d"};
  schema->window_count = 4;
  std::vector<Sample> samples;
  for (int i = 0; i < 3; ++i) {
    Sample s;
    s.sample_id = "X" + std::to_string(i);
    s.label = i % 2;
    s.features.schema = schema;
    s.features.values = {i + 0.0, i + 0.25, i + 0.5, i + 0.75};
    s.meta.freeway = "I-1";
    samples.push_back(s);
  }
  auto masked = mask_samples(samples, {0, 2});
  REQUIRE(masked.size() == 3);
  CHECK(masked[0].features.schema->names == std::vector<std::string>{"a", "c"});
  CHECK(masked[0].features.schema->window_count == 4);
  CHECK(masked[1].features.values == std::vector<double>{1.0, 1.5});
  CHECK(masked[2].sample_id == "X2");
  CHECK(masked[2].meta.freeway == "I-1");
  CHECK(samples[1].features.values.size() == 4);  // source untouched

  CHECK_THROWS(mask_samples(samples, {0, 9}));
  CHECK(mask_samples({}, {0}).empty());
}

TEST_CASE("ensemble training follows the configured strategy and seed") {
  auto data = make_blobs(25, 3, 2.5, 61);
  auto schema = std::make_shared<FeatureSchema>();
  schema->names = data.names;
  std::vector<Sample> train;
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    Sample s;
    s.sample_id = "B" + std::to_string(i);
    s.label = data.labels[i];
    s.features.schema = schema;
    s.features.values = data.rows[i];
    train.push_back(s);
  }

  PipelineConfig cfg;
  cfg.strategy = VoteStrategy::Max;
  auto ens = train_ensemble(train, cfg, 5);
  REQUIRE(ens.members.size() == 5);
  CHECK(ens.members[0]->spec().kind == LearnerKind::LogisticRegression);
  CHECK(ens.members[1]->spec().kind == LearnerKind::DecisionTree);
  CHECK(ens.members[2]->spec().kind == LearnerKind::RandomForest);
  CHECK(ens.members[3]->spec().kind == LearnerKind::GradientBoostedTrees);
  CHECK(ens.members[4]->spec().kind == LearnerKind::Mlp);
  CHECK(ens.strategy == VoteStrategy::Max);
  CHECK(!ens.meta.has_value());

  auto scores = ensemble_scores(ens, train);
  REQUIRE(scores.size() == train.size());
  auto again = ensemble_scores(train_ensemble(train, cfg, 5), train);
  CHECK(scores == again);

  cfg.strategy = VoteStrategy::Stacking;
  cfg.meta_kind = MetaKind::Linear;
  cfg.stacking_folds = 3;
  auto stacked = train_ensemble(train, cfg, 5);
  REQUIRE(stacked.meta.has_value());
  CHECK(stacked.meta->weights.size() == 5);

  CHECK(labels_of(train) == data.labels);
}

TEST_CASE("hybrid join attaches the right crash-likelihood score to each row") {
  LineCorpusOptions opt;
  opt.segments = 10;
  opt.days = 9;
  auto corpus = make_line_corpus(opt);
  const Instant day8 = kMonday + 8 * 86400;
  add_crash(corpus, "P1", 7, day8 + 14 * 3600);
  add_crash(corpus, "S1", 5, day8 + 14 * 3600 + 1500);
  add_crash(corpus, "P2", 9, kMonday + 3 * 86400 + 8 * 3600);
  add_crash(corpus, "N1", 7, kMonday + 2 * 86400 + 14 * 3600);
  add_crash(corpus, "N2", 4, kMonday + 4 * 86400 + 9 * 3600);
  add_crash(corpus, "N3", 8, kMonday + 5 * 86400 + 17 * 3600);
  auto baselines = baseline_for(corpus);

  std::vector<CrashClassification> cls(corpus.crashes.size());
  for (std::size_t i = 0; i < cls.size(); ++i) {
    cls[i].crash_id = corpus.crashes[i].crash_id;
    if (cls[i].crash_id == "P1" || cls[i].crash_id == "P2")
      cls[i].cls = CrashClass::Primary;
    if (cls[i].crash_id == "S1") {
      cls[i].cls = CrashClass::Secondary;
      cls[i].paired_primary_id = "P1";
      cls[i].segment_gap = 2;
    }
  }

  // Crash-likelihood members fit on the corpus' own crash vectors.
  auto pc_samples = build_pc_dataset(corpus, baselines, cls);
  REQUIRE(pc_samples.size() >= 2);
  ModelBundle bundle;
  const auto pc_matrix = to_matrix(pc_samples);
  bundle.pc.model = make_voting(
      {std::shared_ptr<const TrainedModel>(
           fit(default_spec(LearnerKind::DecisionTree, 3), pc_matrix)),
       std::shared_ptr<const TrainedModel>(
           fit(default_spec(LearnerKind::LogisticRegression, 4), pc_matrix))},
      VoteStrategy::Max);
  bundle.pc.policy.p_thres = 0.5;

  // Secondary-side rows: one case, one matched control, one crash-free
  // instant, one control behind an unknown crash id.
  const Instant ref = day8 + 14 * 3600 + 1500;
  auto case_fv = extract_st_vector(corpus, baselines,
                                   make_window_spec(corpus, ref, 5, 7, 4));
  REQUIRE(case_fv.ok);
  auto ctrl_fv = extract_st_vector(
      corpus, baselines,
      make_window_spec(corpus, ref - 6 * 86400, 5, 7, 4));
  REQUIRE(ctrl_fv.ok);

  std::vector<Sample> sc1 = {
      make_sc_sample(ModelKind::SC1, "SC1-S1", 1, "", "S1", case_fv.vec),
      make_sc_sample(ModelKind::SC1, "SC1-S1-N1", 0, "SC1-S1", "N1",
                     ctrl_fv.vec),
      make_sc_sample(ModelKind::SC1, "SC1-S1-N2", 0, "SC1-S1", "GHOST",
                     ctrl_fv.vec)};
  std::vector<Sample> sc2 = {
      make_sc_sample(ModelKind::SC2, "SC2-S1", 1, "", "S1", case_fv.vec),
      make_sc_sample(ModelKind::SC2, "SC2-S1-Wp1", 0, "SC2-S1", "",
                     ctrl_fv.vec)};

  TrainMatrix sc_train = to_matrix(sc1);
  for (const auto& s : sc2) {
    sc_train.rows.push_back(s.features.values);
    sc_train.labels.push_back(s.label);
  }
  bundle.sc1.model = make_voting(
      {std::shared_ptr<const TrainedModel>(
           fit(default_spec(LearnerKind::LogisticRegression, 1), sc_train)),
       std::shared_ptr<const TrainedModel>(
           fit(default_spec(LearnerKind::DecisionTree, 5), sc_train))},
      VoteStrategy::Max);
  bundle.sc2.model = make_voting(
      {std::shared_ptr<const TrainedModel>(
           fit(default_spec(LearnerKind::DecisionTree, 2), sc_train)),
       std::shared_ptr<const TrainedModel>(
           fit(default_spec(LearnerKind::LogisticRegression, 6), sc_train))},
      VoteStrategy::Max);

  std::vector<std::string> warnings;
  auto joined = build_hybrid_set(corpus, baselines, cls, bundle, sc1, sc2,
                                 nullptr, &warnings);
  REQUIRE(joined.size() == 5);
  CHECK(joined[0].id == "SC1-S1");
  CHECK(joined[3].id == "SC2-S1");

  // The case rows join the score of the crash's paired primary; the control
  // row joins its own matched crash; crash-free instants join nothing.
  const CrashRecord* p1 = nullptr;
  const CrashRecord* n1 = nullptr;
  for (const auto& c : corpus.crashes) {
    if (c.crash_id == "P1") p1 = &c;
    if (c.crash_id == "N1") n1 = &c;
  }
  REQUIRE(p1);
  REQUIRE(n1);
  const double p1_score =
      bundle.pc.model.score(extract_pc_vector(corpus, baselines, *p1).vec.values);
  const double n1_score =
      bundle.pc.model.score(extract_pc_vector(corpus, baselines, *n1).vec.values);
  CHECK(joined[0].pc_prob == p1_score);
  CHECK(joined[1].pc_prob == n1_score);
  CHECK(joined[2].pc_prob == 0.0);  // unknown crash id falls back to zero
  CHECK(joined[3].pc_prob == p1_score);
  CHECK(joined[4].pc_prob == 0.0);  // crash-free instant

  bool warned_ghost = false;
  for (const auto& w : warnings)
    warned_ghost = warned_ghost || w.find("GHOST") != std::string::npos;
  CHECK(warned_ghost);

  // Both secondary models score every row, whichever dataset it came from.
  for (const auto& h : joined) {
    const Sample* src = nullptr;
    for (const auto& s : sc1)
      if (s.sample_id == h.id) src = &s;
    for (const auto& s : sc2)
      if (s.sample_id == h.id) src = &s;
    REQUIRE(src);
    CHECK(h.label == src->label);
    CHECK(h.sc1_prob == bundle.sc1.model.score(src->features.values));
    CHECK(h.sc2_prob == bundle.sc2.model.score(src->features.values));
  }

  // Column-restricted crash models plug in through the same join.
  auto cols = feature_columns(*pc_schema(), false, true);
  auto masked_pc = mask_samples(pc_samples, cols);
  ModelBundle narrow = bundle;
  const auto masked_matrix = to_matrix(masked_pc);
  narrow.pc.model = make_voting(
      {std::shared_ptr<const TrainedModel>(
           fit(default_spec(LearnerKind::DecisionTree, 3), masked_matrix)),
       std::shared_ptr<const TrainedModel>(
           fit(default_spec(LearnerKind::LogisticRegression, 4), masked_matrix))},
      VoteStrategy::Max);
  auto joined_narrow = build_hybrid_set(corpus, baselines, cls, narrow, sc1,
                                        sc2, &cols, nullptr);
  auto full_p1 = extract_pc_vector(corpus, baselines, *p1);
  std::vector<double> sub;
  for (int c : cols) sub.push_back(full_p1.vec.values[c]);
  CHECK(joined_narrow[0].pc_prob == narrow.pc.model.score(sub));

  // A crash model trained off-layout is rejected outright.
  ModelBundle wrong = bundle;
  wrong.pc.model = bundle.sc1.model;
  CHECK_THROWS(
      build_hybrid_set(corpus, baselines, cls, wrong, sc1, sc2, nullptr));
}
