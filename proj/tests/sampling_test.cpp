#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <map>
#include <set>

#include "scp/sampling.hpp"
#include "test_support.hpp"

using namespace scp;
using namespace scp::test;

namespace {

// 12-segment corridor, 3 weeks, with a hand-written classification: two
// secondaries, their primaries, and a population of normal crashes.
struct Fixture {
  Corpus corpus;
  BaselineTable baselines;
  std::vector<CrashClassification> cls;

  Fixture() {
    LineCorpusOptions opt;
    opt.segments = 12;
    opt.days = 21;
    corpus = make_line_corpus(opt);
    auto day = [](int d, int h, int m) {
      return kMonday + d * kDaySeconds + h * 3600 + m * 60;
    };
    add_crash(corpus, "P1", 8, day(8, 14, 0));
    add_crash(corpus, "S1", 6, day(8, 14, 25));   // gap 2, 1500 s after P1
    add_crash(corpus, "P2", 11, day(9, 9, 0));
    add_crash(corpus, "S2", 10, day(9, 9, 40));   // gap 1, 2400 s after P2
    // Normal crashes at P1's segment and clock hour: SC1 candidates for S1.
    add_crash(corpus, "N1", 8, day(2, 14, 10));
    add_crash(corpus, "N2", 8, day(5, 14, 50));
    add_crash(corpus, "N3", 8, day(16, 14, 5));
    add_crash(corpus, "N4", 8, day(10, 14, 30));
    add_crash(corpus, "N5", 8, day(12, 14, 40));
    add_crash(corpus, "N6", 8, day(18, 14, 20));
    // Near misses: wrong hour, wrong segment.
    add_crash(corpus, "Q1", 8, day(3, 15, 10));
    add_crash(corpus, "Q2", 7, day(4, 14, 10));
    // Contaminates S1's one-week-back instant (2 mi, ±2 h rule).
    add_crash(corpus, "M1", 5, day(1, 14, 30));
    baselines = baseline_for(corpus);
    for (const auto& c : corpus.crashes) {
      CrashClassification cc;
      cc.crash_id = c.crash_id;
      if (c.crash_id == "P1" || c.crash_id == "P2") {
        cc.cls = CrashClass::Primary;
      } else if (c.crash_id == "S1") {
        cc.cls = CrashClass::Secondary;
        cc.paired_primary_id = "P1";
        cc.segment_gap = 2;
      } else if (c.crash_id == "S2") {
        cc.cls = CrashClass::Secondary;
        cc.paired_primary_id = "P2";
        cc.segment_gap = 1;
      } else {
        cc.cls = CrashClass::Normal;
      }
      cls.push_back(cc);
    }
  }
};

std::map<std::string, const Sample*> by_id(const std::vector<Sample>& v) {
  std::map<std::string, const Sample*> m;
  for (const auto& s : v) m[s.sample_id] = &s;
  return m;
}

}  // namespace

TEST_CASE("sc1 controls are normal crashes matched on segment and hour") {
  Fixture f;
  BuildReport report;
  auto samples =
      build_sc1_dataset(f.corpus, f.baselines, f.cls, 4, 4, 11, &report);
  auto idx = by_id(samples);

  REQUIRE(idx.count("SC1-S1"));
  const Sample& cs = *idx.at("SC1-S1");
  CHECK(cs.label == 1);
  CHECK(cs.model_kind == ModelKind::SC1);
  CHECK(cs.meta.matched_case_id.empty());
  CHECK(cs.meta.source_crash_id == "S1");
  CHECK(cs.meta.hour_of_day == 14);
  CHECK(cs.meta.weekday_flag);  // day 8 is a Tuesday
  CHECK(cs.meta.freeway == "I-1");

  // S1 has six candidates (N1..N6) and keeps exactly the 1:4 ratio.
  int s1_controls = 0;
  for (const auto& s : samples)
    if (s.label == 0 && s.meta.matched_case_id == "SC1-S1") {
      ++s1_controls;
      CHECK(s.sample_id.rfind("SC1-S1-N", 0) == 0);
      CHECK(!s.meta.source_crash_id.empty());
      CHECK(s.meta.source_crash_id[0] == 'N');
    }
  CHECK(s1_controls == 4);
  // Q1 (wrong hour) and Q2 (wrong segment) are never drawn.
  CHECK(!idx.count("SC1-S1-Q1"));
  CHECK(!idx.count("SC1-S1-Q2"));

  // S2 has no (segment 11, hour 9) normals at all.
  REQUIRE(idx.count("SC1-S2"));
  CHECK(report.positives == 2);
  CHECK(report.negatives == 4);
  CHECK(report.shortfall_cases == 1);
  CHECK(report.zero_control_cases == 1);
  bool noted = false;
  for (const auto& w : report.warnings)
    noted = noted || w.find("S2") != std::string::npos;
  CHECK(noted);
}

TEST_CASE("sc1 control reference time shifts by the case gap") {
  Fixture f;
  // Unique speed at the bin a correctly shifted N1 control must read:
  // N1 at 14:10 + 25 min gap = 14:35, so window 1 reads the 14:25 bin.
  const Instant expect_bin = kMonday + 2 * kDaySeconds + 14 * 3600 + 25 * 60;
  set_speed(f.corpus, 6, expect_bin, 123.0);
  auto samples = build_sc1_dataset(f.corpus, f.baselines, f.cls, 6, 4, 11);
  auto idx = by_id(samples);
  REQUIRE(idx.count("SC1-S1-N1"));
  const Sample& ctrl = *idx.at("SC1-S1-N1");
  const auto& schema = *ctrl.features.schema;
  CHECK(ctrl.features.values[schema.index_of("Avg_Speed_1_center")] == 123.0);
  CHECK(ctrl.meta.hour_of_day == 14);
  // N2 at 14:50 shifts into the next hour.
  REQUIRE(idx.count("SC1-S1-N2"));
  CHECK(idx.at("SC1-S1-N2")->meta.hour_of_day == 15);
  // Controls reuse the case's corridor: geometry features match the case.
  const Sample& cs = *idx.at("SC1-S1");
  for (const char* g : {"Speed_Limit_center", "Miles_up", "Lane_Count_down"})
    CHECK(ctrl.features.values[schema.index_of(g)] ==
          cs.features.values[schema.index_of(g)]);
}

TEST_CASE("sc1 control picks are deterministic per seed") {
  Fixture f;
  auto a = build_sc1_dataset(f.corpus, f.baselines, f.cls, 4, 4, 11);
  auto b = build_sc1_dataset(f.corpus, f.baselines, f.cls, 4, 4, 11);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].sample_id == b[i].sample_id);
  // A different seed reorders the 6-choose-4 pick eventually.
  std::set<std::string> seen;
  for (std::uint64_t s : {1ull, 2ull, 3ull, 4ull, 5ull, 6ull, 7ull, 8ull}) {
    auto v = build_sc1_dataset(f.corpus, f.baselines, f.cls, 4, 4, s);
    std::string ids;
    for (const auto& smp : v)
      if (smp.meta.matched_case_id == "SC1-S1") ids += smp.sample_id + ";";
    seen.insert(ids);
  }
  CHECK(seen.size() > 1);
}

TEST_CASE("sc2 controls are crash-free instants at week offsets") {
  Fixture f;
  BuildReport report;
  auto samples =
      build_sc2_dataset(f.corpus, f.baselines, f.cls, 4, 4, 11, &report);
  auto idx = by_id(samples);

  REQUIRE(idx.count("SC2-S1"));
  CHECK(idx.at("SC2-S1")->label == 1);
  CHECK(idx.at("SC2-S1")->meta.source_crash_id == "S1");
  // One week back is contaminated by M1 (segment 5, 14:30, within 2 mi and
  // 2 h of the instant); one week forward is clean.
  CHECK(!idx.count("SC2-S1-Wm1"));
  REQUIRE(idx.count("SC2-S1-Wp1"));
  const Sample& w = *idx.at("SC2-S1-Wp1");
  CHECK(w.label == 0);
  CHECK(w.meta.matched_case_id == "SC2-S1");
  CHECK(w.meta.source_crash_id.empty());  // no crash behind the instant
  CHECK(w.meta.hour_of_day == 14);
  CHECK(report.rejected_controls >= 1);

  // S2 sits mid-corpus: both week offsets are clean.
  REQUIRE(idx.count("SC2-S2-Wm1"));
  REQUIRE(idx.count("SC2-S2-Wp1"));
  CHECK(report.positives == 2);
  CHECK(report.negatives == 3);
  CHECK(report.shortfall_cases == 2);
}

TEST_CASE("pc dataset covers primaries and all normal crashes") {
  Fixture f;
  BuildReport report;
  auto samples = build_pc_dataset(f.corpus, f.baselines, f.cls, &report);
  auto idx = by_id(samples);
  CHECK(report.positives == 2);
  CHECK(report.negatives == 9);  // N1..N6, Q1, Q2, M1
  REQUIRE(idx.count("PC-P1"));
  CHECK(idx.at("PC-P1")->label == 1);
  CHECK(idx.at("PC-P1")->meta.source_crash_id == "P1");
  CHECK(idx.at("PC-P1")->features.schema->pc_layout);
  REQUIRE(idx.count("PC-N3"));
  CHECK(idx.at("PC-N3")->label == 0);
  CHECK(!idx.count("PC-S1"));  // secondaries never enter the crash model
  CHECK(!idx.count("PC-S2"));

  std::vector<CrashClassification> all_normal = f.cls;
  for (auto& c : all_normal) {
    c.cls = CrashClass::Normal;
    c.paired_primary_id.reset();
    c.segment_gap.reset();
  }
  CHECK_THROWS(build_pc_dataset(f.corpus, f.baselines, all_normal));
}

TEST_CASE("matched groups never straddle the train/test split") {
  // 14 synthetic groups of one case and two controls each.
  auto schema = std::make_shared<FeatureSchema>();
  schema->names = {"x"};
  schema->window_count = 1;
  std::vector<Sample> samples;
  for (int g = 0; g < 14; ++g) {
    const std::string case_id = "SC1-C" + std::to_string(g);
    for (int m = 0; m < 3; ++m) {
      Sample s;
      s.sample_id = m == 0 ? case_id : case_id + "-X" + std::to_string(m);
      s.model_kind = ModelKind::SC1;
      s.label = m == 0 ? 1 : 0;
      s.features.schema = schema;
      s.features.values = {static_cast<double>(g * 3 + m)};
      s.meta.matched_case_id = m == 0 ? "" : case_id;
      samples.push_back(s);
    }
  }
  auto split = split_dataset(samples, 0.70, 5);
  CHECK(split.train.size() + split.test.size() == samples.size());
  auto group_of = [](const Sample& s) {
    return s.meta.matched_case_id.empty() ? s.sample_id
                                          : s.meta.matched_case_id;
  };
  std::set<std::string> train_groups, test_groups;
  for (const auto& s : split.train) train_groups.insert(group_of(s));
  for (const auto& s : split.test) test_groups.insert(group_of(s));
  for (const auto& g : train_groups) CHECK(!test_groups.count(g));
  // 14 uniform groups at 0.70 -> 10 in train.
  CHECK(train_groups.size() == 10);
  CHECK(split.train.size() == 30);

  auto again = split_dataset(samples, 0.70, 5);
  REQUIRE(again.train.size() == split.train.size());
  for (std::size_t i = 0; i < again.train.size(); ++i)
    CHECK(again.train[i].sample_id == split.train[i].sample_id);
  bool moved = false;
  for (std::uint64_t s = 6; s < 14 && !moved; ++s) {
    auto other = split_dataset(samples, 0.70, s);
    for (std::size_t i = 0; i < other.train.size(); ++i)
      moved = moved || other.train[i].sample_id != split.train[i].sample_id;
  }
  CHECK(moved);
}

TEST_CASE("split refuses single-member classes") {
  auto schema = std::make_shared<FeatureSchema>();
  schema->names = {"x"};
  std::vector<Sample> samples;
  for (int i = 0; i < 6; ++i) {
    Sample s;
    s.sample_id = "SC1-C" + std::to_string(i);
    s.label = i == 0 ? 1 : 0;  // one positive only
    s.features.schema = schema;
    s.features.values = {1.0};
    samples.push_back(s);
  }
  CHECK_THROWS(split_dataset(samples, 0.70, 1));
}

TEST_CASE("subgroup filter preserves order") {
  Fixture f;
  auto samples = build_sc1_dataset(f.corpus, f.baselines, f.cls, 4, 4, 11);
  auto cases_only = filter_subgroup(
      samples, [](const Sample& s) { return s.label == 1; });
  CHECK(cases_only.size() == 2);
  CHECK(cases_only[0].sample_id == "SC1-S1");
  CHECK(cases_only[1].sample_id == "SC1-S2");
  auto none = filter_subgroup(samples, [](const Sample&) { return false; });
  CHECK(none.empty());
}

TEST_CASE("dataset csv round-trip preserves features and metadata") {
  Fixture f;
  auto samples = build_sc1_dataset(f.corpus, f.baselines, f.cls, 4, 4, 11);
  REQUIRE(!samples.empty());
  const std::string fpath = "/tmp/scp_sampling_features.csv";
  const std::string spath = "/tmp/scp_sampling_samples.csv";
  write_features_csv(fpath, samples);
  write_samples_csv(spath, samples);
  auto back = read_dataset(fpath, spath);
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i].sample_id == samples[i].sample_id);
    CHECK(back[i].label == samples[i].label);
    CHECK(back[i].model_kind == samples[i].model_kind);
    CHECK(back[i].meta.matched_case_id == samples[i].meta.matched_case_id);
    CHECK(back[i].meta.source_crash_id == samples[i].meta.source_crash_id);
    CHECK(back[i].meta.freeway == samples[i].meta.freeway);
    CHECK(back[i].meta.weekday_flag == samples[i].meta.weekday_flag);
    CHECK(back[i].meta.hour_of_day == samples[i].meta.hour_of_day);
    REQUIRE(back[i].features.values.size() == samples[i].features.values.size());
    CHECK(back[i].features.schema->names == samples[i].features.schema->names);
    for (std::size_t j = 0; j < back[i].features.values.size(); ++j)
      CHECK(back[i].features.values[j] == samples[i].features.values[j]);
  }
  std::remove(fpath.c_str());
  std::remove(spath.c_str());
}
