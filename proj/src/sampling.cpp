#include "scp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "scp/csv.hpp"
#include "scp/rng.hpp"

namespace scp {
namespace {

constexpr std::size_t kMaxWarnings = 200;

SampleMeta meta_for(const Corpus& corpus, int segment, Instant ref,
                    std::string matched_case_id = {},
                    std::string source_crash_id = {}) {
  SampleMeta meta;
  meta.freeway = corpus.segments[segment].freeway;
  meta.weekday_flag = is_weekday(ref);
  meta.hour_of_day = hour_of_day(ref);
  meta.matched_case_id = std::move(matched_case_id);
  meta.source_crash_id = std::move(source_crash_id);
  return meta;
}

struct CaseContext {
  const CrashRecord* secondary = nullptr;
  const CrashRecord* primary = nullptr;
  int gap = 0;             // segments between primary and secondary
  Instant time_gap = 0;    // secondary time − primary time
};

// Secondary crashes with resolvable primaries, corpus (chronological) order.
std::vector<CaseContext> collect_cases(
    const Corpus& corpus, const std::vector<CrashClassification>& cls) {
  if (cls.size() != corpus.crashes.size())
    throw std::invalid_argument("classifications do not cover the corpus");
  std::unordered_map<std::string, const CrashRecord*> by_id;
  for (const auto& c : corpus.crashes) by_id[c.crash_id] = &c;
  std::vector<CaseContext> cases;
  for (std::size_t i = 0; i < cls.size(); ++i) {
    if (cls[i].cls != CrashClass::Secondary) continue;
    CaseContext ctx;
    ctx.secondary = &corpus.crashes[i];
    ctx.primary = by_id.at(*cls[i].paired_primary_id);
    ctx.gap = *cls[i].segment_gap;
    ctx.time_gap = ctx.secondary->timestamp - ctx.primary->timestamp;
    cases.push_back(ctx);
  }
  return cases;
}

// Segments within `max_miles` of `segment` in either corridor direction.
std::set<int> contamination_segments(const Corpus& corpus, int segment,
                                     double max_miles) {
  std::set<int> segs;
  for (int s : envelope_segments(corpus, segment, max_miles)) segs.insert(s);
  double cum = 0;
  int s = corpus.downstream[segment];
  while (s != -1) {
    cum += corpus.segments[s].miles;
    if (cum > max_miles + 1e-9) break;
    segs.insert(s);
    s = corpus.downstream[s];
  }
  return segs;
}

template <typename T>
std::vector<T> pick_controls(std::vector<T> eligible, int ratio,
                             std::uint64_t pick_seed) {
  if (static_cast<int>(eligible.size()) <= ratio) return eligible;
  std::vector<std::size_t> order(eligible.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  seeded_shuffle(order, pick_seed);
  order.resize(ratio);
  std::sort(order.begin(), order.end());  // keep candidate order in output
  std::vector<T> picked;
  for (std::size_t i : order) picked.push_back(std::move(eligible[i]));
  return picked;
}

void note(BuildReport* report, const std::string& msg) {
  if (report && report->warnings.size() < kMaxWarnings)
    report->warnings.push_back(msg);
}

std::vector<Sample> build_sc_dataset(const Corpus& corpus,
                                     const BaselineTable& baselines,
                                     const std::vector<CrashClassification>& cls,
                                     ModelKind kind, int ratio,
                                     int window_count, std::uint64_t seed,
                                     BuildReport* report) {
  if (ratio < 1) throw std::invalid_argument("ratio must be >= 1");
  const auto cases = collect_cases(corpus, cls);
  const std::string prefix = model_kind_name(kind);

  // Normal crashes indexed by (segment, clock hour) for SC1 control lookup.
  std::map<std::pair<int, int>, std::vector<const CrashRecord*>> normals;
  if (kind == ModelKind::SC1) {
    for (std::size_t i = 0; i < cls.size(); ++i)
      if (cls[i].cls == CrashClass::Normal) {
        const auto& c = corpus.crashes[i];
        normals[{c.segment, hour_of_day(c.timestamp)}].push_back(&c);
      }
  }

  std::vector<Sample> out;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const auto& ctx = cases[ci];
    const auto& sc = *ctx.secondary;
    const auto& pc = *ctx.primary;
    auto case_spec = make_window_spec(corpus, sc.timestamp, sc.segment,
                                      pc.segment, window_count);
    auto case_vec = extract_st_vector(corpus, baselines, case_spec);
    if (!case_vec.ok) {
      if (report) ++report->rejected_positives;
      note(report, "case " + sc.crash_id + " " + case_vec.reason);
      continue;
    }
    Sample case_sample;
    case_sample.sample_id = prefix + "-" + sc.crash_id;
    case_sample.model_kind = kind;
    case_sample.label = 1;
    case_sample.features = std::move(case_vec.vec);
    case_sample.meta =
        meta_for(corpus, sc.segment, sc.timestamp, {}, sc.crash_id);
    if (report) ++report->positives;

    std::vector<Sample> controls;
    std::size_t candidates_rejected = 0;
    auto try_candidate = [&](Instant ref, const std::string& control_id,
                             const std::string& source_crash) {
      auto spec = make_window_spec(corpus, ref, sc.segment, pc.segment,
                                   window_count);
      auto vec = extract_st_vector(corpus, baselines, spec);
      if (!vec.ok) {
        ++candidates_rejected;
        return;
      }
      Sample s;
      s.sample_id = prefix + "-" + sc.crash_id + "-" + control_id;
      s.model_kind = kind;
      s.label = 0;
      s.features = std::move(vec.vec);
      s.meta = meta_for(corpus, sc.segment, ref, case_sample.sample_id,
                        source_crash);
      controls.push_back(std::move(s));
    };

    if (kind == ModelKind::SC1) {
      auto it = normals.find({pc.segment, hour_of_day(pc.timestamp)});
      if (it != normals.end())
        for (const CrashRecord* n : it->second)
          try_candidate(n->timestamp + ctx.time_gap, n->crash_id, n->crash_id);
    } else {
      const auto contaminated = contamination_segments(
          corpus, sc.segment, kEnvelopeMiles);
      const Instant week = 7 * kDaySeconds;
      const std::int64_t lo = -((sc.timestamp - corpus.t_begin) / week);
      const std::int64_t hi = (corpus.t_end - sc.timestamp) / week;
      for (std::int64_t k = lo; k <= hi; ++k) {
        if (k == 0) continue;
        const Instant t = sc.timestamp + k * week;
        bool clean = true;
        for (const auto& c : corpus.crashes) {
          if (std::abs(c.timestamp - t) > kEnvelopeSeconds) continue;
          if (contaminated.count(c.segment)) {
            clean = false;
            break;
          }
        }
        if (!clean) {
          ++candidates_rejected;
          continue;
        }
        try_candidate(t,
                      "W" + std::string(k > 0 ? "p" : "m") +
                          std::to_string(std::abs(k)),
                      {});
      }
    }

    if (report) report->rejected_controls += candidates_rejected;
    controls = pick_controls(std::move(controls), ratio,
                             sub_seed(seed, 'C', static_cast<int>(kind), ci));
    if (static_cast<int>(controls.size()) < ratio) {
      if (report) ++report->shortfall_cases;
      if (controls.empty()) {
        if (report) ++report->zero_control_cases;
        note(report, "case " + sc.crash_id + ": no eligible controls");
      }
    }
    if (report) report->negatives += controls.size();
    out.push_back(std::move(case_sample));
    for (auto& c : controls) out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

void BuildReport::warn(std::string msg) {
  if (warnings.size() < kMaxWarnings) warnings.push_back(std::move(msg));
}

std::vector<Sample> build_pc_dataset(const Corpus& corpus,
                                     const BaselineTable& baselines,
                                     const std::vector<CrashClassification>& cls,
                                     BuildReport* report) {
  if (cls.size() != corpus.crashes.size())
    throw std::invalid_argument("classifications do not cover the corpus");
  std::vector<Sample> out;
  std::size_t primaries_seen = 0;
  for (std::size_t i = 0; i < cls.size(); ++i) {
    if (cls[i].cls == CrashClass::Secondary) continue;
    const bool positive = cls[i].cls == CrashClass::Primary;
    primaries_seen += positive;
    const auto& crash = corpus.crashes[i];
    auto vec = extract_pc_vector(corpus, baselines, crash);
    if (!vec.ok) {
      if (report) {
        if (positive)
          ++report->rejected_positives;
        else
          ++report->rejected_controls;
      }
      note(report, "crash " + crash.crash_id + " " + vec.reason);
      continue;
    }
    Sample s;
    s.sample_id = "PC-" + crash.crash_id;
    s.model_kind = ModelKind::PC;
    s.label = positive ? 1 : 0;
    s.features = std::move(vec.vec);
    s.meta = meta_for(corpus, crash.segment, crash.timestamp, {}, crash.crash_id);
    if (report) ++(positive ? report->positives : report->negatives);
    out.push_back(std::move(s));
  }
  if (primaries_seen == 0)
    throw std::runtime_error(
        "no primary crashes in the corpus; nothing to learn from (check "
        "classification inputs)");
  return out;
}

std::vector<Sample> build_sc1_dataset(const Corpus& corpus,
                                      const BaselineTable& baselines,
                                      const std::vector<CrashClassification>& cls,
                                      int ratio, int window_count,
                                      std::uint64_t seed, BuildReport* report) {
  return build_sc_dataset(corpus, baselines, cls, ModelKind::SC1, ratio,
                          window_count, seed, report);
}

std::vector<Sample> build_sc2_dataset(const Corpus& corpus,
                                      const BaselineTable& baselines,
                                      const std::vector<CrashClassification>& cls,
                                      int ratio, int window_count,
                                      std::uint64_t seed, BuildReport* report) {
  return build_sc_dataset(corpus, baselines, cls, ModelKind::SC2, ratio,
                          window_count, seed, report);
}

DatasetSplit split_dataset(const std::vector<Sample>& samples, double fraction,
                           std::uint64_t seed) {
  if (!(fraction > 0 && fraction < 1))
    throw std::invalid_argument("split fraction must lie in (0,1)");
  std::size_t n_pos = 0, n_neg = 0;
  for (const auto& s : samples) ++(s.label ? n_pos : n_neg);
  if (n_pos < 2 || n_neg < 2)
    throw std::invalid_argument("each label class needs >= 2 samples to split");

  // Matched groups travel together; standalone samples form their own group.
  std::vector<std::string> group_order;
  std::map<std::string, std::pair<int, int>> group_counts;  // pos, neg
  for (const auto& s : samples) {
    const std::string& key =
        s.meta.matched_case_id.empty() ? s.sample_id : s.meta.matched_case_id;
    if (!group_counts.count(key)) group_order.push_back(key);
    auto& pn = group_counts[key];
    ++(s.label ? pn.first : pn.second);
  }

  // Stratify by group composition so per-label shares match the whole set.
  std::map<std::pair<int, int>, std::vector<std::string>> strata;
  for (const auto& key : group_order) strata[group_counts[key]].push_back(key);

  std::set<std::string> train_groups;
  for (auto& [sig, groups] : strata) {
    seeded_shuffle(groups, sub_seed(seed, 'T', sig.first, sig.second));
    const auto n_train = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(groups.size())));
    for (std::size_t i = 0; i < n_train; ++i) train_groups.insert(groups[i]);
  }

  DatasetSplit split;
  split.seed = seed;
  split.split_fraction = fraction;
  for (const auto& s : samples) {
    const std::string& key =
        s.meta.matched_case_id.empty() ? s.sample_id : s.meta.matched_case_id;
    (train_groups.count(key) ? split.train : split.test).push_back(s);
  }
  return split;
}

std::vector<Sample> filter_subgroup(
    const std::vector<Sample>& samples,
    const std::function<bool(const Sample&)>& predicate) {
  std::vector<Sample> out;
  for (const auto& s : samples)
    if (predicate(s)) out.push_back(s);
  return out;
}

void write_samples_csv(const std::string& path,
                       const std::vector<Sample>& samples) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : samples)
    rows.push_back({s.sample_id, model_kind_name(s.model_kind),
                    std::to_string(s.label), s.meta.matched_case_id,
                    s.meta.freeway, s.meta.weekday_flag ? "1" : "0",
                    std::to_string(s.meta.hour_of_day),
                    s.meta.source_crash_id});
  write_csv(path,
            {"sample_id", "model_kind", "label", "matched_case_id", "freeway",
             "weekday_flag", "hour_of_day", "source_crash_id"},
            rows);
}

void write_features_csv(const std::string& path,
                        const std::vector<Sample>& samples) {
  if (samples.empty()) throw std::invalid_argument("no samples to write");
  const auto& schema = *samples.front().features.schema;
  std::vector<std::string> header{"sample_id", "label", "model_kind"};
  header.insert(header.end(), schema.names.begin(), schema.names.end());
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : samples) {
    if (s.features.schema->names != schema.names)
      throw std::invalid_argument("mixed feature schemas in one file");
    std::vector<std::string> row{s.sample_id, std::to_string(s.label),
                                 model_kind_name(s.model_kind)};
    for (double v : s.features.values) row.push_back(format_double(v));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

std::vector<Sample> read_dataset(const std::string& features_path,
                                 const std::string& samples_path) {
  const CsvTable feats = read_csv(features_path);
  const CsvTable metas = read_csv(
      samples_path, {"sample_id", "model_kind", "label", "matched_case_id",
                     "freeway", "weekday_flag", "hour_of_day",
                     "source_crash_id"});
  if (feats.header.size() < 4 || feats.header[0] != "sample_id" ||
      feats.header[1] != "label" || feats.header[2] != "model_kind")
    throw std::runtime_error(features_path + ": unexpected feature header");

  auto schema = std::make_shared<FeatureSchema>();
  schema->names.assign(feats.header.begin() + 3, feats.header.end());
  for (const auto& n : schema->names) {
    if (auto tf = parse_traffic_feature(n))
      schema->window_count = std::max(schema->window_count, tf->window);
    if (n == "Speed_Limit_crash") schema->pc_layout = true;
  }

  std::unordered_map<std::string, SampleMeta> meta_by_id;
  for (const auto& row : metas.rows) {
    if (row.fields.size() != 8)
      throw std::runtime_error(samples_path + ": line " +
                               std::to_string(row.line) + ": column count");
    SampleMeta m;
    m.matched_case_id = row.fields[3];
    m.freeway = row.fields[4];
    m.weekday_flag = row.fields[5] == "1";
    const auto hour = parse_i64(row.fields[6]);
    if (!hour)
      throw std::runtime_error(samples_path + ": line " +
                               std::to_string(row.line) + ": bad hour");
    m.hour_of_day = static_cast<int>(*hour);
    m.source_crash_id = row.fields[7];
    meta_by_id[row.fields[0]] = std::move(m);
  }

  std::vector<Sample> out;
  for (const auto& row : feats.rows) {
    Sample s;
    s.sample_id = row.fields[0];
    const auto label = parse_i64(row.fields[1]);
    const auto kind = parse_model_kind(row.fields[2]);
    if (!label || (*label != 0 && *label != 1) || !kind)
      throw std::runtime_error(features_path + ": line " +
                               std::to_string(row.line) +
                               ": bad label or model_kind");
    s.label = static_cast<int>(*label);
    s.model_kind = *kind;
    s.features.schema = schema;
    for (std::size_t i = 3; i < row.fields.size(); ++i) {
      const auto v = parse_double(row.fields[i]);
      if (!v)
        throw std::runtime_error(features_path + ": line " +
                                 std::to_string(row.line) +
                                 ": bad value '" + row.fields[i] + "'");
      s.features.values.push_back(*v);
    }
    if (s.features.values.size() != schema->names.size())
      throw std::runtime_error(features_path + ": line " +
                               std::to_string(row.line) + ": column count");
    auto it = meta_by_id.find(s.sample_id);
    if (it == meta_by_id.end())
      throw std::runtime_error(s.sample_id + " missing from " + samples_path);
    s.meta = it->second;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace scp
