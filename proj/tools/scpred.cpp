#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "scp/replay.hpp"
#include "scp/synthgen.hpp"
#include "scp/workflow.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct LoadedCorpus {
  scp::Corpus corpus;
  scp::CrashCalendar calendar;
  scp::BaselineTable baselines;
  scp::ClassificationReport report;
};

LoadedCorpus load_and_classify(const std::string& dir, double alpha) {
  LoadedCorpus lc;
  scp::IngestReport ingest_report;
  lc.corpus = scp::ingest(scp::CorpusPaths::in_dir(dir), ingest_report);
  for (const auto& d : ingest_report.diagnostics)
    std::cerr << d.file << ":" << d.line << ": " << d.message << "\n";
  lc.calendar = scp::build_crash_calendar(lc.corpus);
  lc.baselines = scp::build_baseline(lc.corpus, lc.calendar);
  lc.report = scp::classify_corpus(lc.corpus, lc.baselines, alpha);
  return lc;
}

scp::PipelineConfig config_for(const std::string& config_path,
                               std::uint64_t* seed_override,
                               std::string* strategy_override) {
  scp::PipelineConfig cfg;
  if (!config_path.empty()) cfg = scp::load_pipeline_config(config_path);
  if (seed_override) cfg.seed = *seed_override;
  if (strategy_override && !strategy_override->empty()) {
    const auto parsed = scp::parse_strategy(*strategy_override);
    if (!parsed)
      throw std::invalid_argument("unknown strategy '" + *strategy_override + "'");
    cfg.strategy = parsed->first;
    cfg.meta_kind = parsed->second;
  }
  return cfg;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

void write_split_csvs(const std::string& dir, const std::string& prefix,
                      const scp::DatasetSplit& split) {
  scp::write_features_csv(dir + "/" + prefix + "_train_features.csv", split.train);
  scp::write_samples_csv(dir + "/" + prefix + "_train_samples.csv", split.train);
  scp::write_features_csv(dir + "/" + prefix + "_test_features.csv", split.test);
  scp::write_samples_csv(dir + "/" + prefix + "_test_samples.csv", split.test);
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"secondary-crash likelihood toolkit"};
  app.require_subcommand(1);

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string synth_config, synth_out;
  std::vector<std::string> synth_sets;
  std::uint64_t synth_seed = 0;
  bool synth_seed_given = false;
  synth->add_option("--config", synth_config, "scenario JSON");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--set", synth_sets, "key=value scenario override");
  synth->add_option("--seed", synth_seed, "scenario seed override")
      ->each([&](const std::string&) { synth_seed_given = true; });
  synth->callback([&] {
    scp::ScenarioConfig sc;
    if (!synth_config.empty()) sc = scp::parse_scenario_file(synth_config);
    std::map<std::string, std::string> kv;
    for (const auto& s : synth_sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("--set expects key=value, got '" + s + "'");
      kv[s.substr(0, eq)] = s.substr(eq + 1);
    }
    sc = scp::apply_scenario_overrides(sc, kv);
    if (synth_seed_given) sc.seed = synth_seed;
    fs::create_directories(synth_out);
    const auto result = scp::generate_corpus(sc, synth_out);
    print_warnings(result.warnings);
    std::cout << json{{"out", synth_out},
                      {"segments", result.corpus.segments.size()},
                      {"days", sc.days},
                      {"crashes", result.truth.crashes.size()},
                      {"primary", result.truth.n_primary},
                      {"secondary", result.truth.n_secondary},
                      {"normal", result.truth.n_normal}}
                     .dump()
              << "\n";
  });

  // identify ---------------------------------------------------------------
  auto* identify = app.add_subcommand(
      "identify", "classify crashes into primary/secondary/normal");
  std::string id_data, id_out, id_config;
  double id_alpha = -1.0;
  identify->add_option("--data", id_data, "corpus directory")->required();
  identify->add_option("--out", id_out, "output directory")->required();
  identify->add_option("--config", id_config, "pipeline JSON");
  identify->add_option("--alpha", id_alpha, "contour sensitivity override");
  identify->callback([&] {
    auto cfg = config_for(id_config, nullptr, nullptr);
    if (id_alpha >= 0) cfg.alpha = id_alpha;
    auto lc = load_and_classify(id_data, cfg.alpha);
    fs::create_directories(id_out);
    scp::write_classifications_csv(id_out + "/classifications.csv", lc.report);
    const auto regions = scp::extract_regions(lc.corpus, lc.baselines, cfg.alpha);
    scp::write_cells_csv(id_out + "/impact_cells.csv", lc.corpus, regions,
                         lc.report.classifications);
    json gaps = json::object();
    for (const auto& [gap, count] : lc.report.gap_histogram)
      gaps[std::to_string(gap)] = count;
    std::cout << json{{"primary", lc.report.n_primary},
                      {"secondary", lc.report.n_secondary},
                      {"normal", lc.report.n_normal},
                      {"secondary_ratio", lc.report.secondary_ratio},
                      {"gap_histogram", gaps},
                      {"crashes_without_baseline",
                       lc.report.crashes_without_baseline}}
                     .dump()
              << "\n";
  });

  // features ---------------------------------------------------------------
  auto* features = app.add_subcommand(
      "features", "extract feature vectors for inspection");
  std::string ft_data, ft_out, ft_config;
  features->add_option("--data", ft_data, "corpus directory")->required();
  features->add_option("--out", ft_out, "output directory")->required();
  features->add_option("--config", ft_config, "pipeline JSON");
  features->callback([&] {
    const auto cfg = config_for(ft_config, nullptr, nullptr);
    auto lc = load_and_classify(ft_data, cfg.alpha);
    fs::create_directories(ft_out);

    std::vector<scp::Sample> cases, crashes;
    std::size_t rejected_cases = 0, rejected_crashes = 0;
    std::unordered_map<std::string, const scp::CrashRecord*> by_id;
    for (const auto& c : lc.corpus.crashes) by_id[c.crash_id] = &c;
    for (std::size_t i = 0; i < lc.report.classifications.size(); ++i) {
      const auto& cls = lc.report.classifications[i];
      const auto& crash = lc.corpus.crashes[i];
      auto pc_res = scp::extract_pc_vector(lc.corpus, lc.baselines, crash);
      if (pc_res.ok) {
        scp::Sample s;
        s.sample_id = crash.crash_id;
        s.model_kind = scp::ModelKind::PC;
        s.label = cls.cls == scp::CrashClass::Primary ? 1 : 0;
        s.features = std::move(pc_res.vec);
        crashes.push_back(std::move(s));
      } else {
        ++rejected_crashes;
      }
      if (cls.cls != scp::CrashClass::Secondary) continue;
      const auto* primary = by_id.at(*cls.paired_primary_id);
      auto spec = scp::make_window_spec(lc.corpus, crash.timestamp,
                                        crash.segment, primary->segment,
                                        cfg.window_count);
      auto st_res = scp::extract_st_vector(lc.corpus, lc.baselines, spec);
      if (!st_res.ok) {
        ++rejected_cases;
        continue;
      }
      scp::Sample s;
      s.sample_id = crash.crash_id;
      s.model_kind = scp::ModelKind::SC1;
      s.label = 1;
      s.features = std::move(st_res.vec);
      cases.push_back(std::move(s));
    }
    if (!cases.empty())
      scp::write_features_csv(ft_out + "/case_st_features.csv", cases);
    if (!crashes.empty())
      scp::write_features_csv(ft_out + "/crash_pc_features.csv", crashes);
    std::cout << json{{"cases", cases.size()},
                      {"rejected_cases", rejected_cases},
                      {"crashes", crashes.size()},
                      {"rejected_crashes", rejected_crashes}}
                     .dump()
              << "\n";
  });

  // datasets ---------------------------------------------------------------
  auto* datasets = app.add_subcommand(
      "datasets", "build matched case-control datasets and splits");
  std::string ds_data, ds_out, ds_config;
  std::uint64_t ds_seed = 0;
  bool ds_seed_given = false;
  datasets->add_option("--data", ds_data, "corpus directory")->required();
  datasets->add_option("--out", ds_out, "output directory")->required();
  datasets->add_option("--config", ds_config, "pipeline JSON");
  datasets->add_option("--seed", ds_seed, "sampling/split seed override")
      ->each([&](const std::string&) { ds_seed_given = true; });
  datasets->callback([&] {
    auto cfg = config_for(ds_config, ds_seed_given ? &ds_seed : nullptr, nullptr);
    auto lc = load_and_classify(ds_data, cfg.alpha);
    const auto data = scp::build_all_datasets(lc.corpus, lc.baselines,
                                              lc.report.classifications, cfg);
    fs::create_directories(ds_out);
    write_split_csvs(ds_out, "pc", data.pc);
    write_split_csvs(ds_out, "sc1", data.sc1);
    write_split_csvs(ds_out, "sc2", data.sc2);
    const auto report = scp::dataset_report_json(data);
    write_json_file(ds_out + "/datasets_report.json", report);
    std::cout << report.dump() << "\n";
  });

  // train ------------------------------------------------------------------
  auto* train = app.add_subcommand(
      "train", "train the three ensembles and calibrate thresholds");
  std::string tr_data, tr_out, tr_config, tr_strategy;
  std::uint64_t tr_seed = 0;
  bool tr_seed_given = false;
  train->add_option("--data", tr_data, "corpus directory")->required();
  train->add_option("--out", tr_out, "bundle output directory")->required();
  train->add_option("--config", tr_config, "pipeline JSON");
  train->add_option("--strategy", tr_strategy,
                    "max|mean|median|stacking-linear|stacking-logistic|"
                    "stacking-gbt");
  train->add_option("--seed", tr_seed, "seed override")
      ->each([&](const std::string&) { tr_seed_given = true; });
  train->callback([&] {
    const auto cfg =
        config_for(tr_config, tr_seed_given ? &tr_seed : nullptr, &tr_strategy);
    auto lc = load_and_classify(tr_data, cfg.alpha);
    const auto data = scp::build_all_datasets(lc.corpus, lc.baselines,
                                              lc.report.classifications, cfg);
    std::vector<std::string> warnings;
    const auto bundle = scp::train_bundle(lc.corpus, lc.baselines,
                                          lc.report.classifications, data, cfg,
                                          &warnings);
    print_warnings(warnings);
    scp::save_bundle(tr_out, bundle);
    write_json_file(tr_out + "/pipeline_config.json",
                    scp::pipeline_config_to_json(cfg));
    json summary{{"out", tr_out},
                 {"datasets", scp::dataset_report_json(data)},
                 {"thresholds",
                  {{"pc", bundle.pc.policy.p_thres},
                   {"sc1", bundle.sc1.policy.p_thres},
                   {"sc2", bundle.sc2.policy.p_thres}}},
                 {"warnings", warnings.size()}};
    write_json_file(tr_out + "/training_report.json", summary);
    std::cout << summary.dump() << "\n";
  });

  // evaluate ---------------------------------------------------------------
  auto* evaluate = app.add_subcommand(
      "evaluate", "score a trained bundle on the held-out split");
  std::string ev_data, ev_model, ev_out, ev_config;
  evaluate->add_option("--data", ev_data, "corpus directory")->required();
  evaluate->add_option("--model", ev_model, "bundle directory")->required();
  evaluate->add_option("--out", ev_out, "output directory")->required();
  evaluate->add_option("--config", ev_config,
                       "pipeline JSON (default: the bundle's)");
  evaluate->callback([&] {
    const std::string cfg_path =
        ev_config.empty() ? ev_model + "/pipeline_config.json" : ev_config;
    const auto cfg = scp::load_pipeline_config(cfg_path);
    auto lc = load_and_classify(ev_data, cfg.alpha);
    const auto bundle = scp::load_bundle(ev_model);
    const auto data = scp::build_all_datasets(lc.corpus, lc.baselines,
                                              lc.report.classifications, cfg);
    const auto report = scp::evaluate_bundle(lc.corpus, lc.baselines,
                                             lc.report.classifications, bundle,
                                             data);
    fs::create_directories(ev_out);
    write_json_file(ev_out + "/metrics.json", report.to_json());
    std::vector<std::string> warnings;
    for (const auto& grouping : {"freeway", "weekday"}) {
      const auto rows = scp::subgroup_eval(lc.corpus, lc.baselines,
                                           lc.report.classifications, bundle,
                                           data, cfg, grouping, &warnings);
      scp::write_subgroup_csv(
          ev_out + "/subgroup_" + std::string(grouping) + ".csv", rows);
    }
    print_warnings(warnings);
    std::cout << report.to_json().dump() << "\n";
  });

  // ablate -----------------------------------------------------------------
  auto* ablate = app.add_subcommand(
      "ablate", "window-count and feature-set ablations");
  std::string ab_data, ab_out, ab_config, ab_mode = "both";
  std::vector<int> ab_windows{1, 2, 4, 6};
  std::vector<std::uint64_t> ab_seeds{1, 2, 3, 4, 5};
  ablate->add_option("--data", ab_data, "corpus directory")->required();
  ablate->add_option("--out", ab_out, "output directory")->required();
  ablate->add_option("--config", ab_config, "pipeline JSON");
  ablate->add_option("--mode", ab_mode, "windows|features|both")
      ->check(CLI::IsMember({"windows", "features", "both"}));
  ablate->add_option("--windows", ab_windows, "window counts to sweep");
  ablate->add_option("--seeds", ab_seeds, "seeds to average over");
  ablate->callback([&] {
    const auto cfg = config_for(ab_config, nullptr, nullptr);
    auto lc = load_and_classify(ab_data, cfg.alpha);
    fs::create_directories(ab_out);
    json summary = json::object();
    if (ab_mode != "features") {
      const auto rows = scp::ablation_windows(lc.corpus, lc.baselines,
                                              lc.report.classifications,
                                              ab_windows, ab_seeds, cfg);
      scp::write_window_ablation_csv(ab_out + "/window_ablation.csv", rows);
      json jr = json::array();
      for (const auto& r : rows)
        jr.push_back({{"window_count", r.window_count},
                      {"sc1_auc", r.sc1_auc},
                      {"sc2_auc", r.sc2_auc},
                      {"mean_auc", r.mean_auc}});
      summary["windows"] = jr;
    }
    if (ab_mode != "windows") {
      const auto data = scp::build_all_datasets(lc.corpus, lc.baselines,
                                                lc.report.classifications, cfg);
      const auto rows = scp::ablation_features(lc.corpus, lc.baselines,
                                               lc.report.classifications, data,
                                               cfg);
      scp::write_feature_ablation_csv(ab_out + "/feature_ablation.csv", rows);
      json jr = json::array();
      for (const auto& r : rows)
        jr.push_back({{"feature_set", r.feature_set},
                      {"pc_auc", r.pc_auc},
                      {"sc1_auc", r.sc1_auc},
                      {"sc2_auc", r.sc2_auc},
                      {"hybrid_auc", r.hybrid_auc}});
      summary["features"] = jr;
    }
    std::cout << summary.dump() << "\n";
  });

  // replay -----------------------------------------------------------------
  auto* replay = app.add_subcommand(
      "replay", "stream recorded crashes through monitoring sessions");
  std::string rp_data, rp_model, rp_out;
  double rp_threshold = 0.9, rp_speed = 0.0;
  int rp_max_sessions = 0;
  replay->add_option("--data", rp_data, "corpus directory")->required();
  replay->add_option("--model", rp_model, "bundle directory")->required();
  replay->add_option("--out", rp_out, "output directory")->required();
  replay->add_option("--threshold", rp_threshold, "alert threshold");
  replay->add_option("--speed", rp_speed,
                     "pace output at N× real time (0 = no pacing)");
  replay->add_option("--max-sessions", rp_max_sessions,
                     "stop after this many sessions (0 = all)");
  replay->callback([&] {
    const auto cfg =
        scp::load_pipeline_config(rp_model + "/pipeline_config.json");
    auto lc = load_and_classify(rp_data, cfg.alpha);
    const auto bundle = scp::load_bundle(rp_model);
    scp::ReplayOptions opts;
    opts.alert_threshold = rp_threshold;
    opts.max_sessions = rp_max_sessions;
    const auto result =
        scp::replay_corpus(lc.corpus, lc.baselines, bundle, opts);
    fs::create_directories(rp_out);
    scp::write_alerts_jsonl(rp_out + "/alerts.jsonl", lc.corpus, result.alerts);
    json summary{{"sessions", result.sessions.size()},
                 {"updates", result.updates},
                 {"alerts", result.alerts.size()},
                 {"skipped_vectors", result.skipped_vectors},
                 {"max_update_seconds", result.max_update_seconds},
                 {"threshold", rp_threshold}};
    write_json_file(rp_out + "/replay_report.json", summary);
    if (rp_speed > 0) {
      scp::Instant last = 0;
      for (const auto& a : result.alerts) {
        if (last != 0 && a.emitted_at > last) {
          const double wait =
              static_cast<double>(a.emitted_at - last) / rp_speed;
          std::this_thread::sleep_for(std::chrono::duration<double>(wait));
        }
        last = a.emitted_at;
        std::cout << json{{"crash_id", a.crash_id},
                          {"segment_id",
                           lc.corpus.segments[a.segment].segment_id},
                          {"emitted_at", scp::format_rfc3339(a.emitted_at)},
                          {"hybrid_prob", a.hybrid_prob}}
                         .dump()
                  << "\n";
      }
    }
    std::cout << summary.dump() << "\n";
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
}
