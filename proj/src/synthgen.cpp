#include "scp/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "scp/csv.hpp"
#include "scp/rng.hpp"

namespace scp {
namespace {

struct Wedge {
  // One crash's congestion cone, uniform-mile corridor arithmetic.
  int freeway = 0;
  int order = 0;       // order_index within freeway
  int seg = -1;        // global segment index
  std::int64_t minute = 0;  // minutes since corpus start
  bool can_spawn = false;   // background crashes spawn; injected ones do not
  int creation = 0;
  double dur_scale = 1.0;   // wedge lifetime multiplier (peak-hour clearance)
};

struct Physics {
  double miles, wave, depth, range, total_min, max_scale;
  int k_max;  // deepest wedge gap (d = k*miles < range)

  explicit Physics(const ScenarioConfig& c)
      : miles(c.segment_miles),
        wave(c.wave_speed_mph),
        depth(c.congestion_depth_mph),
        range(c.depth_range_miles),
        total_min(c.clearance_minutes + c.recovery_minutes) {
    k_max = 0;
    while ((k_max + 1) * miles < range - 1e-9) ++k_max;
    // Wedges must die inside the 2 h pairing envelope.
    max_scale = std::min(1.0 + std::max(c.peak_clearance_factor, 0.0),
                         (5.0 * kEnvelopeBins) / total_min);
  }

  // Speed drop caused by a crash at gap k (k segments downstream of the cell),
  // tau_min minutes after the crash, with the crash's duration scale.
  double drop(int k, double tau_min, double scale) const {
    const double d = k * miles;
    if (d >= range) return 0;
    const double arrival = d / wave * 60.0;
    const double total = total_min * scale;
    if (tau_min < arrival || tau_min >= total) return 0;
    return depth * (1.0 - d / range) * (1.0 - tau_min / total);
  }
};

// Peak intensity in [0, 1] at a minute of day: 1 inside a peak window,
// trapezoid ramps on both sides.
double peak_fraction(const ScenarioConfig& c, double minute) {
  auto trapezoid = [&](double start_h, double end_h) {
    const double s = start_h * 60, e = end_h * 60, r = c.ramp_minutes;
    if (minute <= s - r || minute >= e + r) return 0.0;
    if (minute < s) return (minute - (s - r)) / r;
    if (minute <= e) return 1.0;
    return ((e + r) - minute) / r;
  };
  return std::max(trapezoid(c.am_peak_start, c.am_peak_end),
                  trapezoid(c.pm_peak_start, c.pm_peak_end));
}

double wedge_scale(const ScenarioConfig& c, const Physics& phys,
                   std::int64_t minute_of_day) {
  const double f = peak_fraction(c, static_cast<double>(minute_of_day));
  return std::min(1.0 + std::max(c.peak_clearance_factor, 0.0) * f,
                  phys.max_scale);
}

struct DiurnalProfile {
  std::vector<double> speed;  // per obs offset within a day
  std::vector<double> volume;
  int obs_per_day = 0;

  DiurnalProfile(const ScenarioConfig& c) {
    obs_per_day = kDaySeconds / c.obs_interval_s;
    speed.resize(obs_per_day);
    volume.resize(obs_per_day);
    for (int i = 0; i < obs_per_day; ++i) {
      const double minute = i * c.obs_interval_s / 60.0;
      const double f = peak_fraction(c, minute);
      speed[i] = c.free_flow_mph - c.peak_dip_mph * f;
      volume[i] = 4.0 + 4.0 * f;
    }
  }
};

constexpr const char* kDirection = "EB";

int env_up_count(const ScenarioConfig& c) {
  int n = 0;
  while ((n + 1) * c.segment_miles <= kEnvelopeMiles + 1e-9) ++n;
  return n;
}

struct RainCalendar {
  // Per day: raining during [start, end) minutes of day; inactive when
  // start == end.
  std::vector<std::pair<int, int>> window;

  bool raining(std::int64_t day, int minute_of_day) const {
    const auto& w = window[day];
    return minute_of_day >= w.first && minute_of_day < w.second;
  }
};

double occupancy_of(double clean_speed, const ScenarioConfig& c) {
  return std::clamp(6.0 + 1.5 * (c.free_flow_mph - clean_speed), 2.0, 96.0);
}

}  // namespace

ScenarioConfig apply_scenario_overrides(
    ScenarioConfig cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    auto as_d = [&]() {
      auto v = parse_double(value);
      if (!v) throw std::runtime_error("scenario key " + key +
                                       ": bad numeric value '" + value + "'");
      return *v;
    };
    auto as_i = [&]() { return static_cast<int>(as_d()); };
    if (key == "segment_count") cfg.segment_count = as_i();
    else if (key == "segment_miles") cfg.segment_miles = as_d();
    else if (key == "freeway_count") cfg.freeway_count = as_i();
    else if (key == "days") cfg.days = as_i();
    else if (key == "free_flow_mph") cfg.free_flow_mph = as_d();
    else if (key == "peak_dip_mph") cfg.peak_dip_mph = as_d();
    else if (key == "am_peak_start") cfg.am_peak_start = as_i();
    else if (key == "am_peak_end") cfg.am_peak_end = as_i();
    else if (key == "pm_peak_start") cfg.pm_peak_start = as_i();
    else if (key == "pm_peak_end") cfg.pm_peak_end = as_i();
    else if (key == "ramp_minutes") cfg.ramp_minutes = as_d();
    else if (key == "noise_std_mph") cfg.noise_std_mph = as_d();
    else if (key == "crash_rate_per_day") cfg.crash_rate_per_day = as_d();
    else if (key == "peak_crash_fraction") cfg.peak_crash_fraction = as_d();
    else if (key == "wave_speed_mph") cfg.wave_speed_mph = as_d();
    else if (key == "congestion_depth_mph") cfg.congestion_depth_mph = as_d();
    else if (key == "clearance_minutes") cfg.clearance_minutes = as_d();
    else if (key == "peak_clearance_factor") cfg.peak_clearance_factor = as_d();
    else if (key == "recovery_minutes") cfg.recovery_minutes = as_d();
    else if (key == "depth_range_miles") cfg.depth_range_miles = as_d();
    else if (key == "secondary_hazard") cfg.secondary_hazard = as_d();
    else if (key == "rain_hazard_multiplier") cfg.rain_hazard_multiplier = as_d();
    else if (key == "rain_day_probability") cfg.rain_day_probability = as_d();
    else if (key == "seed") {
      auto v = parse_i64(value);
      if (!v || *v < 0)
        throw std::runtime_error("scenario key seed: bad value '" + value + "'");
      cfg.seed = static_cast<std::uint64_t>(*v);
    }
    else if (key == "obs_interval_s") cfg.obs_interval_s = as_i();
    else if (key == "weather_interval_min") cfg.weather_interval_min = as_i();
    else throw std::runtime_error("unknown scenario key: " + key);
  }
  if (cfg.segment_count < 2 || cfg.days < 1 || cfg.segment_miles <= 0 ||
      cfg.wave_speed_mph <= 0 || cfg.freeway_count < 1)
    throw std::runtime_error("invalid scenario configuration");
  if (cfg.secondary_hazard < 0 || cfg.secondary_hazard > 1 ||
      cfg.rain_day_probability < 0 || cfg.rain_day_probability > 1)
    throw std::runtime_error("scenario probabilities must lie in [0,1]");
  return cfg;
}

ScenarioConfig parse_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t");
    line = line.substr(first, last - first + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string s) {
      auto a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      auto b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    kv[trim(key)] = trim(value);
  }
  return apply_scenario_overrides(ScenarioConfig{}, kv);
}

SynthResult generate_corpus(const ScenarioConfig& cfg,
                            const std::optional<std::string>& out_dir,
                            bool keep_observations) {
  SynthResult result;
  Corpus& corpus = result.corpus;
  const Physics phys(cfg);
  const DiurnalProfile diurnal(cfg);
  const int n_env_up = env_up_count(cfg);
  const Instant t0 = *parse_rfc3339("2024-03-04T00:00:00Z");  // a Monday
  const std::int64_t total_minutes =
      static_cast<std::int64_t>(cfg.days) * 1440;
  const int segs_per_fwy = cfg.segment_count;
  const int n_segments = segs_per_fwy * cfg.freeway_count;

  if (cfg.congestion_depth_mph <= 3.0 * cfg.noise_std_mph)
    result.warnings.push_back(
        "congestion_depth close to noise floor; injected congestion may be "
        "undetectable");

  // Geometry. Deterministic per seed; corridor order matches order_index.
  {
    std::mt19937_64 rng(sub_seed(cfg.seed, 'G'));
    std::uniform_real_distribution<double> u(0, 1);
    for (int f = 0; f < cfg.freeway_count; ++f) {
      for (int k = 0; k < segs_per_fwy; ++k) {
        SegmentGeometry g;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "F%d-S%03d", f + 1, k);
        g.segment_id = buf;
        g.freeway = "F" + std::to_string(f + 1);
        g.direction = kDirection;
        g.order_index = k;
        g.miles = cfg.segment_miles;
        const double r = u(rng);
        g.speed_limit = r < 0.2 ? 60 : (r < 0.6 ? 65 : 70);
        const double rl = u(rng);
        g.lane_count = rl < 0.3 ? 2 : (rl < 0.7 ? 3 : (rl < 0.9 ? 4 : 5));
        const double rt = u(rng);
        g.segment_type = rt < 0.7    ? SegmentType::Basic
                         : rt < 0.8  ? SegmentType::Weaving
                         : rt < 0.9  ? SegmentType::Merge
                                     : SegmentType::Diverge;
        corpus.segments.push_back(g);
      }
    }
    corpus.upstream.assign(n_segments, -1);
    corpus.downstream.assign(n_segments, -1);
    for (int i = 0; i < n_segments; ++i) {
      corpus.segment_index[corpus.segments[i].segment_id] = i;
      if (i % segs_per_fwy != 0) {
        corpus.upstream[i] = i - 1;
        corpus.downstream[i - 1] = i;
      }
    }
  }
  corpus.t_begin = t0;
  corpus.t_end = t0 + static_cast<Instant>(cfg.days) * kDaySeconds -
                 cfg.obs_interval_s;

  // Rain calendar (decided before crashes; rain modulates the hazard).
  RainCalendar rain;
  rain.window.assign(cfg.days, {0, 0});
  {
    for (int d = 0; d < cfg.days; ++d) {
      std::mt19937_64 rng(sub_seed(cfg.seed, 'R', d));
      std::uniform_real_distribution<double> u(0, 1);
      if (u(rng) < cfg.rain_day_probability) {
        const int start = 300 + static_cast<int>(u(rng) * 800);
        const int dur = 120 + static_cast<int>(u(rng) * 180);
        rain.window[d] = {start, std::min(start + dur, 1440)};
      }
    }
  }

  // ---- Crash construction: chronological minute sweep. ----
  struct PendingBg {
    std::int64_t minute;
    int freeway;
    int order;
    int draw_seq;
  };
  std::vector<PendingBg> schedule;
  {
    for (int d = 0; d < cfg.days; ++d) {
      std::mt19937_64 rng(sub_seed(cfg.seed, 'S', d));
      std::poisson_distribution<int> pois(cfg.crash_rate_per_day);
      std::uniform_real_distribution<double> u(0, 1);
      for (int f = 0; f < cfg.freeway_count; ++f) {
        const int count = pois(rng);
        for (int i = 0; i < count; ++i) {
          int minute_of_day;
          const bool in_peak = u(rng) < cfg.peak_crash_fraction;
          const int am0 = cfg.am_peak_start * 60, am1 = cfg.am_peak_end * 60;
          const int pm0 = cfg.pm_peak_start * 60, pm1 = cfg.pm_peak_end * 60;
          const int peak_len = (am1 - am0) + (pm1 - pm0);
          if (in_peak && peak_len > 0) {
            int off = static_cast<int>(u(rng) * peak_len);
            minute_of_day = off < am1 - am0 ? am0 + off : pm0 + (off - (am1 - am0));
          } else {
            // uniform over off-peak minutes
            int off = static_cast<int>(u(rng) * (1440 - peak_len));
            minute_of_day = 0;
            int remaining = off;
            for (int m = 0; m < 1440; ++m) {
              const bool peak = (m >= am0 && m < am1) || (m >= pm0 && m < pm1);
              if (peak) continue;
              if (remaining == 0) {
                minute_of_day = m;
                break;
              }
              --remaining;
            }
          }
          const int order = static_cast<int>(u(rng) * segs_per_fwy);
          schedule.push_back({static_cast<std::int64_t>(d) * 1440 + minute_of_day,
                              f, std::min(order, segs_per_fwy - 1),
                              static_cast<int>(schedule.size())});
        }
      }
    }
    std::sort(schedule.begin(), schedule.end(), [](const auto& a, const auto& b) {
      return std::tie(a.minute, a.draw_seq) < std::tie(b.minute, b.draw_seq);
    });
  }

  std::vector<Wedge> wedges;
  struct TruthWork {
    Wedge w;
    int parent_creation = -1;
    double spawn_drop_frac = 0;
    bool raining = false;
  };
  std::vector<TruthWork> crash_work;
  std::size_t dropped_backgrounds = 0;

  // Any existing crash congests (segment=order gap k, bin) when any obs time of
  // the bin sees a positive drop from it.
  auto bin_congested_by = [&](const Wedge& c, int freeway, int order,
                              std::int64_t bin_minute) {
    if (c.freeway != freeway) return false;
    const int k = c.order - order;
    if (k < 0 || k > phys.k_max) return false;
    for (int j = 0; j < kBinSeconds / cfg.obs_interval_s; ++j) {
      const double tau =
          (bin_minute - c.minute) + j * (cfg.obs_interval_s / 60.0);
      if (phys.drop(k, tau, c.dur_scale) > 0) return true;
    }
    return false;
  };
  auto envelope_claims = [&](const Wedge& c, int freeway, int order,
                             std::int64_t bin_minute) {
    if (c.freeway != freeway) return false;
    const int gap = c.order - order;
    if (gap < 0 || gap > n_env_up) return false;
    const std::int64_t cbin = (c.minute / 5) * 5;
    const std::int64_t bin_off = (bin_minute - cbin) / 5;
    return bin_off >= 0 && bin_off <= kEnvelopeBins;
  };

  {
    std::size_t sched_i = 0;
    std::size_t recent_lo = 0;
    std::mt19937_64* day_rng = nullptr;
    std::mt19937_64 sched_rng, hazard_rng;
    std::int64_t current_day = -1;
    for (std::int64_t m = 0; m < total_minutes; ++m) {
      const std::int64_t day = m / 1440;
      if (day != current_day) {
        current_day = day;
        sched_rng.seed(sub_seed(cfg.seed, 'P', day));
        hazard_rng.seed(sub_seed(cfg.seed, 'H', day));
      }
      (void)day_rng;
      const std::int64_t bin_minute = (m / 5) * 5;
      // retire crashes too old to matter for claims or wedges
      const std::int64_t retire_after = std::max<std::int64_t>(
          130, static_cast<std::int64_t>(phys.total_min * phys.max_scale) + 10);
      while (recent_lo < crash_work.size() &&
             crash_work[recent_lo].w.minute + retire_after < m)
        ++recent_lo;

      // 1) background crashes scheduled for this minute
      std::uniform_real_distribution<double> u01(0, 1);
      while (sched_i < schedule.size() && schedule[sched_i].minute == m) {
        PendingBg bg = schedule[sched_i++];
        bool placed = false;
        int order = bg.order;
        for (int attempt = 0; attempt < 30 && !placed; ++attempt) {
          // A background must sit outside every recent crash's claim: both the
          // congestion it renders and its full pairing envelope. Inside the
          // envelope, the background's own wedge could flood-connect to that
          // crash's detected region and read as a secondary.
          bool blocked = false;
          for (std::size_t ci = recent_lo; ci < crash_work.size(); ++ci)
            if (bin_congested_by(crash_work[ci].w, bg.freeway, order,
                                 bin_minute) ||
                envelope_claims(crash_work[ci].w, bg.freeway, order,
                                bin_minute)) {
              blocked = true;
              break;
            }
          if (!blocked) {
            Wedge w;
            w.freeway = bg.freeway;
            w.order = order;
            w.seg = bg.freeway * segs_per_fwy + order;
            w.minute = m;
            w.can_spawn = true;
            w.creation = static_cast<int>(crash_work.size());
            w.dur_scale = wedge_scale(cfg, phys, m % 1440);
            crash_work.push_back({w, -1, 0, rain.raining(day, m % 1440)});
            placed = true;
          } else {  // blocked: retry at a fresh random position
            order = static_cast<int>(u01(sched_rng) * segs_per_fwy);
            order = std::min(order, segs_per_fwy - 1);
          }
        }
        if (!placed) ++dropped_backgrounds;
      }

      // 2) hazard-driven secondary injections
      const bool raining_now = rain.raining(day, m % 1440);
      const double rain_mult =
          raining_now ? cfg.rain_hazard_multiplier : 1.0;
      const std::size_t n_existing = crash_work.size();
      for (std::size_t ci = recent_lo; ci < n_existing; ++ci) {
        if (!crash_work[ci].w.can_spawn) continue;
        const Wedge parent = crash_work[ci].w;
        for (int k = 0; k <= phys.k_max; ++k) {
          const int order = parent.order - k;
          if (order < 0) break;
          const double drop = phys.drop(
              k, static_cast<double>(m - parent.minute), parent.dur_scale);
          if (drop < 0.5) continue;  // spawn floor keeps cells detectable
          bool claimed = false;
          for (std::size_t cj = recent_lo; cj < crash_work.size(); ++cj) {
            if (crash_work[cj].w.creation == parent.creation) continue;
            if (envelope_claims(crash_work[cj].w, parent.freeway, order,
                                bin_minute)) {
              claimed = true;
              break;
            }
          }
          if (claimed) continue;
          const double p =
              cfg.secondary_hazard * (drop / phys.depth) * rain_mult;
          if (u01(hazard_rng) < std::min(p, 1.0)) {
            Wedge w;
            w.freeway = parent.freeway;
            w.order = order;
            w.seg = parent.freeway * segs_per_fwy + order;
            w.minute = m;
            w.can_spawn = false;
            w.creation = static_cast<int>(crash_work.size());
            w.dur_scale = wedge_scale(cfg, phys, m % 1440);
            crash_work.push_back(
                {w, parent.creation, drop / phys.depth, raining_now});
          }
        }
      }
    }
  }
  if (dropped_backgrounds)
    result.warnings.push_back(std::to_string(dropped_backgrounds) +
                              " background crashes dropped (no congestion-free "
                              "placement found)");

  // Assign chronological ids and build corpus + truth crash lists.
  std::vector<double> crash_dur_scale;  // corpus crash order
  {
    std::vector<int> order_of(crash_work.size());
    std::vector<std::size_t> sorted_idx(crash_work.size());
    for (std::size_t i = 0; i < sorted_idx.size(); ++i) sorted_idx[i] = i;
    std::sort(sorted_idx.begin(), sorted_idx.end(),
              [&](std::size_t a, std::size_t b) {
                return std::tie(crash_work[a].w.minute, a) <
                       std::tie(crash_work[b].w.minute, b);
              });
    std::vector<std::string> id_of(crash_work.size());
    for (std::size_t rank = 0; rank < sorted_idx.size(); ++rank) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "C%05zu", rank + 1);
      id_of[sorted_idx[rank]] = buf;
      order_of[sorted_idx[rank]] = static_cast<int>(rank);
    }
    std::vector<bool> has_child(crash_work.size(), false);
    for (const auto& cw : crash_work)
      if (cw.parent_creation >= 0) has_child[cw.parent_creation] = true;
    for (std::size_t rank = 0; rank < sorted_idx.size(); ++rank) {
      const auto& cw = crash_work[sorted_idx[rank]];
      CrashRecord rec;
      rec.crash_id = id_of[sorted_idx[rank]];
      rec.segment = cw.w.seg;
      rec.timestamp = t0 + cw.w.minute * 60;
      corpus.crashes.push_back(rec);
      crash_dur_scale.push_back(cw.w.dur_scale);

      TruthCrash tc;
      tc.crash_id = rec.crash_id;
      tc.segment = rec.segment;
      tc.timestamp = rec.timestamp;
      if (cw.parent_creation >= 0) {
        tc.role = CrashClass::Secondary;
        tc.parent_id = id_of[cw.parent_creation];
        tc.spawn_drop_frac = cw.spawn_drop_frac;
        tc.minutes_since_parent = static_cast<int>(
            cw.w.minute - crash_work[cw.parent_creation].w.minute);
        ++result.truth.n_secondary;
      } else if (has_child[sorted_idx[rank]]) {
        tc.role = CrashClass::Primary;
        ++result.truth.n_primary;
      } else {
        tc.role = CrashClass::Normal;
        ++result.truth.n_normal;
      }
      tc.raining = cw.raining;
      result.truth.crashes.push_back(tc);
    }
  }

  // True impact-cell sets: own-wedge cells at bin granularity, through the
  // same quantized bin-average arithmetic the corpus aggregation uses.
  {
    const int obs_per_bin = kBinSeconds / cfg.obs_interval_s;
    std::vector<double> clean(obs_per_bin), with_drop(obs_per_bin);
    for (std::size_t ti = 0; ti < result.truth.crashes.size(); ++ti) {
      const auto& tc = result.truth.crashes[ti];
      const double scale = crash_dur_scale[ti];
      auto& cells = result.truth.true_cells[tc.crash_id];
      const int f = tc.segment / segs_per_fwy;
      const int order = tc.segment % segs_per_fwy;
      const std::int64_t c_minute = (tc.timestamp - t0) / 60;
      const std::int64_t c_bin_minute = (c_minute / 5) * 5;
      for (int k = 0; k <= phys.k_max; ++k) {
        const int cell_order = order - k;
        if (cell_order < 0) break;
        for (int b = 0; b <= kEnvelopeBins; ++b) {
          const std::int64_t bin_minute = c_bin_minute + 5 * b;
          if (bin_minute >= total_minutes) break;
          bool any = false;
          for (int j = 0; j < obs_per_bin; ++j) {
            const Instant tau_s = (bin_minute * 60 + j * cfg.obs_interval_s);
            const int slot_obs = static_cast<int>((tau_s % kDaySeconds) /
                                                  cfg.obs_interval_s);
            const double base = diurnal.speed[slot_obs];
            const double dr =
                phys.drop(k, (tau_s - (c_minute * 60)) / 60.0, scale);
            clean[j] = base;
            with_drop[j] = base - dr;
            if (dr > 0) any = true;
          }
          if (!any) continue;
          if (bin_average(with_drop.data(), obs_per_bin) <
              bin_average(clean.data(), obs_per_bin))
            cells.push_back({f * segs_per_fwy + cell_order,
                             t0 + bin_minute * 60});
        }
      }
      std::sort(cells.begin(), cells.end());
    }
  }

  // ---- Weather records. ----
  corpus.weather.assign(n_segments, {});
  {
    const int slots = 1440 / cfg.weather_interval_min;
    for (int d = 0; d < cfg.days; ++d) {
      std::mt19937_64 rng(sub_seed(cfg.seed, 'W', d));
      std::normal_distribution<double> n01(0, 1);
      for (int f = 0; f < cfg.freeway_count; ++f) {
        std::vector<WeatherRecord> day_records;
        for (int s = 0; s < slots; ++s) {
          const int minute = s * cfg.weather_interval_min;
          WeatherRecord w;
          w.timestamp = t0 + (static_cast<Instant>(d) * 1440 + minute) * 60;
          if (rain.raining(d, minute)) {
            w.temperature = 72 + 1.5 * n01(rng);
            w.humidity = std::clamp(88 + 3 * n01(rng), 0.0, 100.0);
            w.wind_speed = 5 + std::abs(1.5 * n01(rng));
            w.precipitation = 4 + std::abs(2 * n01(rng));
            w.visibility = std::max(4.5 + 0.8 * n01(rng), 0.5);
            w.condition = WeatherCondition::Rain;
          } else {
            w.temperature = 82 + 2 * n01(rng);
            w.humidity = std::clamp(62 + 4 * n01(rng), 0.0, 100.0);
            w.wind_speed = 3 + std::abs(1.0 * n01(rng));
            w.precipitation = 0;
            w.visibility = 10;
            w.condition = WeatherCondition::Clear;
          }
          day_records.push_back(w);
        }
        for (int k = 0; k < segs_per_fwy; ++k) {
          const int seg = f * segs_per_fwy + k;
          for (auto w : day_records) {
            w.segment = seg;
            corpus.weather[seg].push_back(w);
          }
        }
      }
    }
  }

  // ---- Traffic field, day by day. ----
  std::ofstream traffic_out;
  if (out_dir) {
    traffic_out.open(*out_dir + "/traffic.csv");
    if (!traffic_out)
      throw std::runtime_error("cannot write " + *out_dir + "/traffic.csv");
    traffic_out << "segment_id,timestamp_utc,speed_mph,volume_veh_per_30s,"
                   "occupancy_pct\n";
  }
  {
    // Per-crash wedge intervals indexed by segment.
    struct Interval {
      std::int64_t start_s, end_s;
      std::size_t crash;
      int k;
    };
    std::vector<std::vector<Interval>> per_seg(n_segments);
    for (std::size_t ci = 0; ci < corpus.crashes.size(); ++ci) {
      const auto& rec = corpus.crashes[ci];
      const int f = rec.segment / segs_per_fwy;
      const int order = rec.segment % segs_per_fwy;
      for (int k = 0; k <= phys.k_max; ++k) {
        if (order - k < 0) break;
        const double arrival_min = k * cfg.segment_miles / phys.wave * 60.0;
        Interval iv;
        iv.start_s = rec.timestamp + static_cast<Instant>(arrival_min * 60);
        iv.end_s = rec.timestamp +
                   static_cast<Instant>(phys.total_min * crash_dur_scale[ci] * 60) +
                   1;
        iv.crash = ci;
        iv.k = k;
        per_seg[f * segs_per_fwy + (order - k)].push_back(iv);
      }
    }
    for (auto& v : per_seg)
      std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) {
        return a.start_s < b.start_s;
      });

    const int obs_per_day = diurnal.obs_per_day;
    std::vector<TrafficObservation> day_obs;
    day_obs.reserve(static_cast<std::size_t>(obs_per_day) * n_segments);
    std::string csv_line;
    for (int d = 0; d < cfg.days; ++d) {
      day_obs.clear();
      const Instant day_start = t0 + static_cast<Instant>(d) * kDaySeconds;
      for (int seg = 0; seg < n_segments; ++seg) {
        std::mt19937_64 rng(sub_seed(cfg.seed, 'N', d, seg));
        std::normal_distribution<double> n01(0, 1);
        const auto& ivs = per_seg[seg];
        // index of first interval that could overlap this day
        std::size_t iv_lo = std::lower_bound(ivs.begin(), ivs.end(),
                                             day_start - 7200,
                                             [](const Interval& a, Instant t) {
                                               return a.start_s < t;
                                             }) -
                            ivs.begin();
        for (int i = 0; i < obs_per_day; ++i) {
          const Instant tau = day_start + static_cast<Instant>(i) *
                                              cfg.obs_interval_s;
          double max_drop = 0;
          for (std::size_t j = iv_lo; j < ivs.size(); ++j) {
            if (ivs[j].start_s > tau) break;
            if (ivs[j].end_s <= tau) continue;
            const auto& rec = corpus.crashes[ivs[j].crash];
            const double dr = phys.drop(ivs[j].k, (tau - rec.timestamp) / 60.0,
                                        crash_dur_scale[ivs[j].crash]);
            max_drop = std::max(max_drop, dr);
          }
          const double clean = diurnal.speed[i] - max_drop;
          const double vol_clean =
              diurnal.volume[i] * (0.35 + 0.65 * clean / cfg.free_flow_mph);
          const double occ_clean = occupancy_of(clean, cfg);
          double speed = clean, occ = occ_clean, vol = vol_clean;
          if (cfg.noise_std_mph > 0) {
            speed = std::max(clean + cfg.noise_std_mph * n01(rng), 0.0);
            occ = std::clamp(occ_clean + 2.0 * n01(rng), 0.0, 100.0);
            vol = std::max(vol_clean + 0.6 * n01(rng), 0.0);
          }
          TrafficObservation o;
          o.segment = seg;
          o.timestamp = tau;
          o.speed = speed;
          o.volume = vol;
          o.occupancy = occ;
          day_obs.push_back(o);
          if (out_dir) {
            csv_line.clear();
            csv_line += corpus.segments[seg].segment_id;
            csv_line += ',';
            csv_line += format_rfc3339(tau);
            csv_line += ',';
            csv_line += format_double(speed);
            csv_line += ',';
            csv_line += format_double(vol);
            csv_line += ',';
            csv_line += format_double(occ);
            csv_line += '\n';
            traffic_out << csv_line;
          }
        }
      }
      auto day_bins = aggregate_bins(day_obs);
      corpus.bins.insert(corpus.bins.end(), day_bins.begin(), day_bins.end());
      if (keep_observations)
        corpus.observations.insert(corpus.observations.end(), day_obs.begin(),
                                   day_obs.end());
    }
  }
  if (out_dir && !traffic_out)
    throw std::runtime_error("traffic.csv write failed");
  if (out_dir) traffic_out.close();

  std::sort(corpus.bins.begin(), corpus.bins.end(),
            [](const TrafficBin& a, const TrafficBin& b) {
              return std::tie(a.segment, a.bin_start) <
                     std::tie(b.segment, b.bin_start);
            });
  corpus.bin_index.reserve(corpus.bins.size() * 2);
  for (std::size_t i = 0; i < corpus.bins.size(); ++i)
    corpus.bin_index[Corpus::bin_key(corpus.bins[i].segment,
                                     corpus.bins[i].bin_start)] =
        static_cast<int>(i);
  if (keep_observations)
    std::sort(corpus.observations.begin(), corpus.observations.end(),
              [](const TrafficObservation& a, const TrafficObservation& b) {
                if (a.segment != b.segment) return a.segment < b.segment;
                return a.timestamp < b.timestamp;
              });

  if (out_dir) {
    CorpusPaths paths = CorpusPaths::in_dir(*out_dir);
    // geometry / crashes / weather via the shared writers; traffic was
    // streamed above.
    Corpus shell = corpus;
    shell.observations.clear();
    CorpusPaths no_traffic = paths;
    no_traffic.traffic = *out_dir + "/.traffic.skip";
    export_corpus(shell, no_traffic);
    std::remove(no_traffic.traffic.c_str());
    write_ground_truth_json(*out_dir + "/ground_truth.json", result.truth,
                            corpus);
  }
  return result;
}

void write_ground_truth_json(const std::string& path, const GroundTruth& truth,
                             const Corpus& corpus) {
  nlohmann::json j;
  j["counts"] = {{"primary", truth.n_primary},
                 {"secondary", truth.n_secondary},
                 {"normal", truth.n_normal}};
  nlohmann::json crashes = nlohmann::json::array();
  for (const auto& c : truth.crashes) {
    nlohmann::json e;
    e["crash_id"] = c.crash_id;
    e["segment_id"] = corpus.segments[c.segment].segment_id;
    e["timestamp"] = format_rfc3339(c.timestamp);
    e["role"] = crash_class_name(c.role);
    if (!c.parent_id.empty()) {
      e["parent_id"] = c.parent_id;
      e["spawn_drop_frac"] = c.spawn_drop_frac;
      e["minutes_since_parent"] = c.minutes_since_parent;
    }
    e["raining"] = c.raining;
    crashes.push_back(e);
  }
  j["crashes"] = crashes;
  nlohmann::json cells;
  for (const auto& [id, cell_list] : truth.true_cells) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [seg, bin] : cell_list)
      arr.push_back({{"segment_id", corpus.segments[seg].segment_id},
                     {"bin_start", format_rfc3339(bin)}});
    cells[id] = arr;
  }
  j["true_cells"] = cells;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

OracleComparison oracle_compare(const GroundTruth& truth,
                                const std::vector<CrashClassification>& cls,
                                const std::vector<ImpactRegion>& regions,
                                const Corpus& corpus) {
  OracleComparison out;
  std::map<std::string, std::string> true_pair, detected_pair;
  for (const auto& c : truth.crashes)
    if (c.role == CrashClass::Secondary) true_pair[c.crash_id] = c.parent_id;
  for (const auto& c : cls)
    if (c.cls == CrashClass::Secondary && c.paired_primary_id)
      detected_pair[c.crash_id] = *c.paired_primary_id;
  out.true_pairs = true_pair.size();
  out.detected_pairs = detected_pair.size();
  for (const auto& [id, parent] : detected_pair) {
    auto it = true_pair.find(id);
    if (it != true_pair.end() && it->second == parent) ++out.matched_pairs;
  }
  out.pair_recall = out.true_pairs
                        ? static_cast<double>(out.matched_pairs) / out.true_pairs
                        : 1.0;
  out.pair_precision = out.detected_pairs ? static_cast<double>(out.matched_pairs) /
                                                out.detected_pairs
                                          : 1.0;

  // Jaccard of detected vs true cell sets over true primaries.
  std::map<std::string, const ImpactRegion*> region_of;
  for (const auto& r : regions) region_of[r.primary_crash_id] = &r;
  double jac_sum = 0;
  std::size_t jac_n = 0;
  for (const auto& c : truth.crashes) {
    if (c.role != CrashClass::Primary) continue;
    auto tit = truth.true_cells.find(c.crash_id);
    auto rit = region_of.find(c.crash_id);
    if (tit == truth.true_cells.end() || rit == region_of.end()) continue;
    std::set<std::pair<int, Instant>> t(tit->second.begin(), tit->second.end());
    std::set<std::pair<int, Instant>> d;
    for (const auto& cell : rit->second->cells)
      d.insert({cell.segment, cell.bin_start});
    std::size_t inter = 0;
    for (const auto& cell : d)
      if (t.count(cell)) ++inter;
    const std::size_t uni = t.size() + d.size() - inter;
    if (uni == 0) continue;
    jac_sum += static_cast<double>(inter) / uni;
    ++jac_n;
  }
  out.mean_jaccard = jac_n ? jac_sum / jac_n : 0.0;
  return out;
}

}  // namespace scp
