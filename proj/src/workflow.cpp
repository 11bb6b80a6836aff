#include "scp/workflow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "scp/csv.hpp"
#include "scp/features.hpp"
#include "scp/rng.hpp"

namespace scp {
namespace {

void note(std::vector<std::string>* warnings, std::string msg) {
  if (warnings) warnings->push_back(std::move(msg));
}

// The secondary crash id behind a sample, shared between the two control
// schemes ("SC1-C00042" and "SC2-C00042" both map to "C00042").
std::string sc_case_key(const Sample& s) {
  const std::string& base =
      s.label == 1 ? s.sample_id : s.meta.matched_case_id;
  const std::string prefix = std::string(model_kind_name(s.model_kind)) + "-";
  return base.rfind(prefix, 0) == 0 ? base.substr(prefix.size()) : base;
}

void check_split_side(const std::vector<Sample>& side, const char* what,
                      int min_per_label) {
  int pos = 0, neg = 0;
  for (const auto& s : side) (s.label == 1 ? pos : neg)++;
  if (pos < min_per_label || neg < min_per_label)
    throw std::runtime_error(std::string("shared split leaves too few ") +
                             what + " samples per label (need more cases)");
}

void check_schema(const EnsembleModel& model,
                  const std::vector<std::string>& names, const char* what) {
  if (model.feature_names() != names)
    throw std::invalid_argument(std::string(what) +
                                ": sample schema does not match the model");
}

MetricsReport hybrid_metrics(const ModelBundle& bundle,
                             const std::vector<HybridSample>& join) {
  MetricsReport r;
  std::vector<double> probs;
  std::vector<int> labels;
  probs.reserve(join.size());
  labels.reserve(join.size());
  for (const auto& h : join) {
    const HybridOutput out =
        hybrid_predict(h.pc_prob, h.sc1_prob, h.sc2_prob, bundle);
    probs.push_back(out.prob);
    labels.push_back(h.label);
    if (h.label == 1)
      out.label ? ++r.tp : ++r.fn;
    else
      out.label ? ++r.fp : ++r.tn;
  }
  const long long total = r.tp + r.fp + r.tn + r.fn;
  r.accuracy =
      total > 0 ? static_cast<double>(r.tp + r.tn) / static_cast<double>(total) : 0.0;
  r.sensitivity = (r.tp + r.fn) > 0
                      ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn)
                      : 0.0;
  r.far = (r.fp + r.tn) > 0
              ? static_cast<double>(r.fp) / static_cast<double>(r.fp + r.tn)
              : 0.0;
  const bool both = (r.tp + r.fn) > 0 && (r.fp + r.tn) > 0;
  r.auc = both ? auc(probs, labels) : 0.5;
  return r;
}

double hybrid_auc_of(const std::vector<HybridSample>& join) {
  std::vector<double> probs;
  std::vector<int> labels;
  for (const auto& h : join) {
    probs.push_back(std::max({h.pc_prob, h.sc1_prob, h.sc2_prob}));
    labels.push_back(h.label);
  }
  return auc(probs, labels);
}

ThresholdPolicy calibrate_on_train(const EnsembleModel& model,
                                   const std::vector<Sample>& train,
                                   double target_far) {
  std::vector<double> neg;
  for (const auto& s : train)
    if (s.label == 0) neg.push_back(model.score(s.features.values));
  ThresholdPolicy policy = calibrate_threshold(neg, target_far);
  policy.calibration_set_id = score_set_hash(neg);
  return policy;
}

}  // namespace

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.window_count = j.value("window_count", cfg.window_count);
  cfg.control_ratio = j.value("control_ratio", cfg.control_ratio);
  cfg.split_fraction = j.value("split_fraction", cfg.split_fraction);
  cfg.target_far = j.value("target_far", cfg.target_far);
  cfg.stacking_folds = j.value("stacking_folds", cfg.stacking_folds);
  cfg.alert_threshold = j.value("alert_threshold", cfg.alert_threshold);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("strategy")) {
    const auto parsed = parse_strategy(j.at("strategy").get<std::string>());
    if (!parsed)
      throw std::invalid_argument("unknown strategy '" +
                                  j.at("strategy").get<std::string>() + "'");
    cfg.strategy = parsed->first;
    cfg.meta_kind = parsed->second;
  }
  if (cfg.window_count < 1 || cfg.window_count > 24)
    throw std::invalid_argument("window_count out of range");
  if (cfg.control_ratio < 1)
    throw std::invalid_argument("control_ratio must be positive");
  return cfg;
}

nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg) {
  std::string strategy = vote_strategy_name(cfg.strategy);
  if (cfg.strategy == VoteStrategy::Stacking)
    strategy += std::string("-") + meta_kind_name(cfg.meta_kind);
  return nlohmann::json{{"alpha", cfg.alpha},
                        {"window_count", cfg.window_count},
                        {"control_ratio", cfg.control_ratio},
                        {"split_fraction", cfg.split_fraction},
                        {"target_far", cfg.target_far},
                        {"strategy", strategy},
                        {"stacking_folds", cfg.stacking_folds},
                        {"alert_threshold", cfg.alert_threshold},
                        {"seed", cfg.seed}};
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return pipeline_config_from_json(j);
}

std::pair<DatasetSplit, DatasetSplit> split_sc_shared(
    const std::vector<Sample>& sc1, const std::vector<Sample>& sc2,
    double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split fraction must be in (0, 1)");

  struct GroupStat {
    long long pos = 0, neg = 0;
  };
  std::map<std::string, GroupStat> groups;
  std::vector<std::string> order;  // first-appearance order
  for (const auto* set : {&sc1, &sc2})
    for (const auto& s : *set) {
      const std::string key = sc_case_key(s);
      auto [it, fresh] = groups.try_emplace(key);
      if (fresh) order.push_back(key);
      (s.label == 1 ? it->second.pos : it->second.neg)++;
    }
  if (groups.empty()) throw std::invalid_argument("no secondary samples to split");

  // Stratify by joint control composition so both sides keep the case:control
  // balance, then shuffle within each stratum.
  std::map<std::pair<long long, long long>, std::vector<std::string>> strata;
  for (const auto& key : order) {
    const auto& g = groups.at(key);
    strata[{g.pos, g.neg}].push_back(key);
  }
  std::set<std::string> train_keys;
  for (auto& [sig, keys] : strata) {
    seeded_shuffle(keys, sub_seed(seed, 'T', static_cast<std::uint64_t>(sig.first),
                                  static_cast<std::uint64_t>(sig.second)));
    const auto n_train = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(keys.size())));
    for (std::size_t i = 0; i < n_train && i < keys.size(); ++i)
      train_keys.insert(keys[i]);
  }

  std::pair<DatasetSplit, DatasetSplit> out;
  for (auto [set, split] : {std::pair{&sc1, &out.first}, {&sc2, &out.second}}) {
    split->seed = seed;
    split->split_fraction = fraction;
    for (const auto& s : *set)
      (train_keys.count(sc_case_key(s)) ? split->train : split->test).push_back(s);
    check_split_side(split->train, "training", 2);
    check_split_side(split->test, "test", 1);
  }
  return out;
}

DatasetBundle build_all_datasets(const Corpus& corpus,
                                 const BaselineTable& baselines,
                                 const std::vector<CrashClassification>& cls,
                                 const PipelineConfig& cfg) {
  DatasetBundle out;
  const auto pc_samples = build_pc_dataset(corpus, baselines, cls, &out.pc_report);
  out.pc = split_dataset(pc_samples, cfg.split_fraction, cfg.seed);
  const auto sc1 = build_sc1_dataset(corpus, baselines, cls, cfg.control_ratio,
                                     cfg.window_count, cfg.seed, &out.sc1_report);
  const auto sc2 = build_sc2_dataset(corpus, baselines, cls, cfg.control_ratio,
                                     cfg.window_count, cfg.seed, &out.sc2_report);
  auto split = split_sc_shared(sc1, sc2, cfg.split_fraction, cfg.seed);
  out.sc1 = std::move(split.first);
  out.sc2 = std::move(split.second);
  return out;
}

nlohmann::json dataset_report_json(const DatasetBundle& data) {
  auto one = [](const DatasetSplit& split, const BuildReport& report) {
    return nlohmann::json{{"train", split.train.size()},
                          {"test", split.test.size()},
                          {"positives", report.positives},
                          {"negatives", report.negatives},
                          {"rejected_positives", report.rejected_positives},
                          {"rejected_controls", report.rejected_controls},
                          {"shortfall_cases", report.shortfall_cases},
                          {"zero_control_cases", report.zero_control_cases},
                          {"warnings", report.warnings}};
  };
  return nlohmann::json{{"pc", one(data.pc, data.pc_report)},
                        {"sc1", one(data.sc1, data.sc1_report)},
                        {"sc2", one(data.sc2, data.sc2_report)}};
}

EnsembleModel train_ensemble(const std::vector<Sample>& train,
                             const PipelineConfig& cfg, std::uint64_t seed,
                             std::vector<std::string>* warnings) {
  const TrainMatrix m = to_matrix(train);
  std::vector<std::shared_ptr<const TrainedModel>> members;
  for (const auto& spec : default_member_specs(seed)) members.push_back(fit(spec, m));
  if (cfg.strategy == VoteStrategy::Stacking)
    return fit_stacking(std::move(members), m, cfg.meta_kind, cfg.stacking_folds,
                        seed, warnings);
  return make_voting(std::move(members), cfg.strategy);
}

std::vector<double> ensemble_scores(const EnsembleModel& model,
                                    const std::vector<Sample>& samples) {
  if (samples.empty()) return {};
  check_schema(model, samples.front().features.schema->names, "ensemble_scores");
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model.score(s.features.values));
  return out;
}

std::vector<int> labels_of(const std::vector<Sample>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

std::vector<HybridSample> build_hybrid_set(
    const Corpus& corpus, const BaselineTable& baselines,
    const std::vector<CrashClassification>& cls, const ModelBundle& bundle,
    const std::vector<Sample>& sc1_set, const std::vector<Sample>& sc2_set,
    const std::vector<int>* pc_cols, std::vector<std::string>* warnings) {
  if (cls.size() != corpus.crashes.size())
    throw std::invalid_argument("classifications do not cover the corpus");

  std::unordered_map<std::string, const CrashRecord*> crash_by_id;
  for (const auto& c : corpus.crashes) crash_by_id[c.crash_id] = &c;
  std::unordered_map<std::string, std::string> primary_of;
  for (std::size_t i = 0; i < cls.size(); ++i)
    if (cls[i].cls == CrashClass::Secondary && cls[i].paired_primary_id)
      primary_of[corpus.crashes[i].crash_id] = *cls[i].paired_primary_id;

  const auto full_pc = pc_schema();
  std::vector<std::string> expected_pc;
  if (pc_cols) {
    for (int c : *pc_cols) {
      if (c < 0 || static_cast<std::size_t>(c) >= full_pc->names.size())
        throw std::invalid_argument("pc column index out of range");
      expected_pc.push_back(full_pc->names[c]);
    }
  } else {
    expected_pc = full_pc->names;
  }
  if (bundle.pc.model.feature_names() != expected_pc)
    throw std::invalid_argument(
        "hybrid join: crash model features do not match the corpus layout");

  std::unordered_map<std::string, double> pc_cache;
  auto pc_score_of = [&](const std::string& crash_id) -> double {
    auto it = pc_cache.find(crash_id);
    if (it != pc_cache.end()) return it->second;
    double p = 0.0;
    auto found = crash_by_id.find(crash_id);
    if (found == crash_by_id.end()) {
      note(warnings, "hybrid join: unknown crash id " + crash_id + "; using 0");
    } else {
      auto res = extract_pc_vector(corpus, baselines, *found->second);
      if (!res.ok) {
        note(warnings, "hybrid join: crash " + crash_id + " " + res.reason +
                           "; using 0");
      } else if (pc_cols) {
        std::vector<double> sub;
        sub.reserve(pc_cols->size());
        for (int c : *pc_cols) sub.push_back(res.vec.values[c]);
        p = bundle.pc.model.score(sub);
      } else {
        p = bundle.pc.model.score(res.vec.values);
      }
    }
    pc_cache.emplace(crash_id, p);
    return p;
  };

  std::vector<HybridSample> out;
  for (auto [set, model] : {std::pair{&sc1_set, &bundle.sc1.model},
                            {&sc2_set, &bundle.sc2.model}}) {
    if (set->empty()) continue;
    check_schema(*model, set->front().features.schema->names, "hybrid join");
    check_schema(set == &sc1_set ? bundle.sc2.model : bundle.sc1.model,
                 set->front().features.schema->names, "hybrid join");
    for (const auto& s : *set) {
      HybridSample h;
      h.id = s.sample_id;
      h.label = s.label;
      h.sc1_prob = bundle.sc1.model.score(s.features.values);
      h.sc2_prob = bundle.sc2.model.score(s.features.values);
      if (s.label == 1) {
        const std::string secondary_id = s.meta.source_crash_id;
        auto pit = primary_of.find(secondary_id);
        if (pit == primary_of.end()) {
          note(warnings, "hybrid join: no paired crash for " + secondary_id +
                             "; using 0");
        } else {
          h.pc_prob = pc_score_of(pit->second);
        }
      } else if (!s.meta.source_crash_id.empty()) {
        h.pc_prob = pc_score_of(s.meta.source_crash_id);
      }  // crash-free instant: no crash, no alarm to join — stays 0
      out.push_back(std::move(h));
    }
  }
  return out;
}

ModelBundle train_bundle(const Corpus& corpus, const BaselineTable& baselines,
                         const std::vector<CrashClassification>& cls,
                         const DatasetBundle& data, const PipelineConfig& cfg,
                         std::vector<std::string>* warnings) {
  ModelBundle bundle;
  bundle.window_count = cfg.window_count;
  bundle.hybrid_far_target = cfg.target_far;

  bundle.pc.model = train_ensemble(data.pc.train, cfg, sub_seed(cfg.seed, 'Q', 0),
                                   warnings);
  bundle.sc1.model = train_ensemble(data.sc1.train, cfg,
                                    sub_seed(cfg.seed, 'Q', 1), warnings);
  bundle.sc2.model = train_ensemble(data.sc2.train, cfg,
                                    sub_seed(cfg.seed, 'Q', 2), warnings);

  bundle.pc.policy =
      calibrate_on_train(bundle.pc.model, data.pc.train, cfg.target_far);
  bundle.sc1.policy =
      calibrate_on_train(bundle.sc1.model, data.sc1.train, cfg.target_far);
  bundle.sc2.policy =
      calibrate_on_train(bundle.sc2.model, data.sc2.train, cfg.target_far);

  const auto join = build_hybrid_set(corpus, baselines, cls, bundle,
                                     data.sc1.train, data.sc2.train, nullptr,
                                     warnings);
  return calibrate_hybrid(std::move(bundle), join, cfg.target_far);
}

nlohmann::json EvaluationReport::to_json() const {
  auto one = [](const ModelEval& e) {
    nlohmann::json aucs = nlohmann::json::object();
    for (const auto& [name, value] : e.member_aucs) aucs[name] = value;
    return nlohmann::json{{"metrics", e.metrics.to_json()},
                          {"member_aucs", aucs}};
  };
  return nlohmann::json{{"pc", one(pc)},
                        {"sc1", one(sc1)},
                        {"sc2", one(sc2)},
                        {"hybrid", hybrid.to_json()}};
}

EvaluationReport evaluate_bundle(const Corpus& corpus,
                                 const BaselineTable& baselines,
                                 const std::vector<CrashClassification>& cls,
                                 const ModelBundle& bundle,
                                 const DatasetBundle& data) {
  auto eval_model = [](const CalibratedEnsemble& ce,
                       const std::vector<Sample>& test) {
    ModelEval e;
    const auto scores = ensemble_scores(ce.model, test);
    const auto labels = labels_of(test);
    e.metrics = metrics_at_threshold(scores, labels, ce.policy.p_thres);
    for (const auto& member : ce.model.members) {
      std::vector<double> ms;
      ms.reserve(test.size());
      for (const auto& s : test) ms.push_back(member->score(s.features.values));
      e.member_aucs.emplace_back(learner_kind_name(member->spec().kind),
                                 auc(ms, labels));
    }
    return e;
  };

  EvaluationReport report;
  report.pc = eval_model(bundle.pc, data.pc.test);
  report.sc1 = eval_model(bundle.sc1, data.sc1.test);
  report.sc2 = eval_model(bundle.sc2, data.sc2.test);
  const auto join = build_hybrid_set(corpus, baselines, cls, bundle,
                                     data.sc1.test, data.sc2.test);
  report.hybrid = hybrid_metrics(bundle, join);
  return report;
}

std::vector<int> feature_columns(const FeatureSchema& schema, bool weather,
                                 bool geometry) {
  std::vector<int> cols;
  for (std::size_t i = 0; i < schema.names.size(); ++i) {
    switch (feature_group(schema.names[i])) {
      case FeatureGroup::Traffic:
        cols.push_back(static_cast<int>(i));
        break;
      case FeatureGroup::Weather:
        if (weather) cols.push_back(static_cast<int>(i));
        break;
      case FeatureGroup::Geometry:
        if (geometry) cols.push_back(static_cast<int>(i));
        break;
    }
  }
  return cols;
}

std::vector<Sample> mask_samples(const std::vector<Sample>& samples,
                                 const std::vector<int>& cols) {
  if (samples.empty()) return {};
  const auto& src = *samples.front().features.schema;
  auto schema = std::make_shared<FeatureSchema>();
  schema->window_count = src.window_count;
  schema->pc_layout = src.pc_layout;
  for (int c : cols) {
    if (c < 0 || static_cast<std::size_t>(c) >= src.names.size())
      throw std::invalid_argument("mask column index out of range");
    schema->names.push_back(src.names[c]);
  }
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.features.schema->names != src.names)
      throw std::invalid_argument("mask_samples: mixed schemas");
    Sample m = s;
    m.features.schema = schema;
    m.features.values.clear();
    for (int c : cols) m.features.values.push_back(s.features.values[c]);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<WindowAblationRow> ablation_windows(
    const Corpus& corpus, const BaselineTable& baselines,
    const std::vector<CrashClassification>& cls,
    const std::vector<int>& window_counts,
    const std::vector<std::uint64_t>& seeds, const PipelineConfig& cfg) {
  if (window_counts.empty() || seeds.empty())
    throw std::invalid_argument("ablation needs window counts and seeds");
  std::vector<WindowAblationRow> rows;
  for (int w : window_counts) {
    WindowAblationRow row;
    row.window_count = w;
    for (std::uint64_t s : seeds) {
      const auto sc1 = build_sc1_dataset(corpus, baselines, cls,
                                         cfg.control_ratio, w, s);
      const auto sc2 = build_sc2_dataset(corpus, baselines, cls,
                                         cfg.control_ratio, w, s);
      const auto split = split_sc_shared(sc1, sc2, cfg.split_fraction, s);
      const auto ens1 = train_ensemble(split.first.train, cfg, sub_seed(s, 'Q', 1));
      const auto ens2 = train_ensemble(split.second.train, cfg, sub_seed(s, 'Q', 2));
      row.sc1_auc += auc(ensemble_scores(ens1, split.first.test),
                         labels_of(split.first.test));
      row.sc2_auc += auc(ensemble_scores(ens2, split.second.test),
                         labels_of(split.second.test));
    }
    row.sc1_auc /= static_cast<double>(seeds.size());
    row.sc2_auc /= static_cast<double>(seeds.size());
    row.mean_auc = (row.sc1_auc + row.sc2_auc) / 2.0;
    rows.push_back(row);
  }
  return rows;
}

std::vector<FeatureAblationRow> ablation_features(
    const Corpus& corpus, const BaselineTable& baselines,
    const std::vector<CrashClassification>& cls, const DatasetBundle& data,
    const PipelineConfig& cfg) {
  if (data.pc.train.empty() || data.sc1.train.empty() || data.sc2.train.empty())
    throw std::invalid_argument("ablation needs non-empty training splits");
  const auto& pc_full = *data.pc.train.front().features.schema;
  const auto& st_full = *data.sc1.train.front().features.schema;

  struct SetDef {
    const char* name;
    bool weather, geometry;
  };
  const SetDef sets[] = {{"traffic", false, false},
                         {"traffic+weather", true, false},
                         {"traffic+geometry", false, true},
                         {"all", true, true}};

  std::vector<FeatureAblationRow> rows;
  for (const auto& def : sets) {
    const auto pc_cols = feature_columns(pc_full, def.weather, def.geometry);
    const auto st_cols = feature_columns(st_full, def.weather, def.geometry);

    ModelBundle bundle;
    bundle.window_count = cfg.window_count;
    const auto pc_train = mask_samples(data.pc.train, pc_cols);
    const auto pc_test = mask_samples(data.pc.test, pc_cols);
    const auto sc1_train = mask_samples(data.sc1.train, st_cols);
    const auto sc1_test = mask_samples(data.sc1.test, st_cols);
    const auto sc2_train = mask_samples(data.sc2.train, st_cols);
    const auto sc2_test = mask_samples(data.sc2.test, st_cols);
    bundle.pc.model = train_ensemble(pc_train, cfg, sub_seed(cfg.seed, 'Q', 0));
    bundle.sc1.model = train_ensemble(sc1_train, cfg, sub_seed(cfg.seed, 'Q', 1));
    bundle.sc2.model = train_ensemble(sc2_train, cfg, sub_seed(cfg.seed, 'Q', 2));

    FeatureAblationRow row;
    row.feature_set = def.name;
    row.pc_auc = auc(ensemble_scores(bundle.pc.model, pc_test), labels_of(pc_test));
    row.sc1_auc =
        auc(ensemble_scores(bundle.sc1.model, sc1_test), labels_of(sc1_test));
    row.sc2_auc =
        auc(ensemble_scores(bundle.sc2.model, sc2_test), labels_of(sc2_test));
    const auto join = build_hybrid_set(corpus, baselines, cls, bundle, sc1_test,
                                       sc2_test, &pc_cols);
    row.hybrid_auc = hybrid_auc_of(join);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<SubgroupRow> subgroup_eval(
    const Corpus& corpus, const BaselineTable& baselines,
    const std::vector<CrashClassification>& cls, const ModelBundle& bundle,
    const DatasetBundle& data, const PipelineConfig& cfg,
    const std::string& grouping, std::vector<std::string>* warnings) {
  std::vector<std::pair<std::string, std::function<bool(const Sample&)>>> groups;
  if (grouping == "freeway") {
    std::set<std::string> freeways;
    for (const auto* set :
         {&data.sc1.train, &data.sc1.test, &data.sc2.train, &data.sc2.test})
      for (const auto& s : *set) freeways.insert(s.meta.freeway);
    for (const auto& f : freeways)
      groups.emplace_back(
          "freeway=" + f,
          [f](const Sample& s) { return s.meta.freeway == f; });
  } else if (grouping == "weekday") {
    groups.emplace_back("weekday",
                        [](const Sample& s) { return s.meta.weekday_flag; });
    groups.emplace_back("weekend",
                        [](const Sample& s) { return !s.meta.weekday_flag; });
  } else {
    throw std::invalid_argument("unknown grouping '" + grouping + "'");
  }

  std::vector<SubgroupRow> rows;
  {
    SubgroupRow overall;
    overall.group = "overall";
    overall.n_train = data.sc1.train.size() + data.sc2.train.size();
    overall.n_test = data.sc1.test.size() + data.sc2.test.size();
    overall.sc1_auc = auc(ensemble_scores(bundle.sc1.model, data.sc1.test),
                          labels_of(data.sc1.test));
    overall.sc2_auc = auc(ensemble_scores(bundle.sc2.model, data.sc2.test),
                          labels_of(data.sc2.test));
    overall.hybrid_auc = hybrid_auc_of(build_hybrid_set(
        corpus, baselines, cls, bundle, data.sc1.test, data.sc2.test));
    rows.push_back(std::move(overall));
  }

  for (const auto& [name, pred] : groups) {
    SubgroupRow row;
    row.group = name;
    const auto sc1_train = filter_subgroup(data.sc1.train, pred);
    const auto sc1_test = filter_subgroup(data.sc1.test, pred);
    const auto sc2_train = filter_subgroup(data.sc2.train, pred);
    const auto sc2_test = filter_subgroup(data.sc2.test, pred);
    row.n_train = sc1_train.size() + sc2_train.size();
    row.n_test = sc1_test.size() + sc2_test.size();
    try {
      ModelBundle local = bundle;
      local.sc1.model = train_ensemble(sc1_train, cfg, sub_seed(cfg.seed, 'Q', 1));
      local.sc2.model = train_ensemble(sc2_train, cfg, sub_seed(cfg.seed, 'Q', 2));
      row.sc1_auc =
          auc(ensemble_scores(local.sc1.model, sc1_test), labels_of(sc1_test));
      row.sc2_auc =
          auc(ensemble_scores(local.sc2.model, sc2_test), labels_of(sc2_test));
      row.hybrid_auc = hybrid_auc_of(build_hybrid_set(
          corpus, baselines, cls, local, sc1_test, sc2_test));
    } catch (const std::exception& e) {
      row.skipped = true;
      row.note = e.what();
      note(warnings, "subgroup " + name + " skipped: " + e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_window_ablation_csv(const std::string& path,
                               const std::vector<WindowAblationRow>& rows) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rows)
    out.push_back({std::to_string(r.window_count), format_double(r.sc1_auc),
                   format_double(r.sc2_auc), format_double(r.mean_auc)});
  write_csv(path, {"window_count", "sc1_auc", "sc2_auc", "mean_auc"}, out);
}

void write_feature_ablation_csv(const std::string& path,
                                const std::vector<FeatureAblationRow>& rows) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rows)
    out.push_back({r.feature_set, format_double(r.pc_auc),
                   format_double(r.sc1_auc), format_double(r.sc2_auc),
                   format_double(r.hybrid_auc)});
  write_csv(path, {"feature_set", "pc_auc", "sc1_auc", "sc2_auc", "hybrid_auc"},
            out);
}

void write_subgroup_csv(const std::string& path,
                        const std::vector<SubgroupRow>& rows) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rows)
    out.push_back({r.group, std::to_string(r.n_train), std::to_string(r.n_test),
                   r.skipped ? "" : format_double(r.sc1_auc),
                   r.skipped ? "" : format_double(r.sc2_auc),
                   r.skipped ? "" : format_double(r.hybrid_auc),
                   r.skipped ? "skipped: " + r.note : ""});
  write_csv(path,
            {"group", "n_train", "n_test", "sc1_auc", "sc2_auc", "hybrid_auc",
             "note"},
            out);
}

}  // namespace scp
