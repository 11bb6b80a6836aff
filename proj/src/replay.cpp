#include "scp/replay.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <stdexcept>

#include "scp/timeutil.hpp"

namespace scp {

MonitoringSession open_session(const Corpus& corpus,
                               const BaselineTable& baselines,
                               const ModelBundle& bundle,
                               const CrashRecord& crash) {
  MonitoringSession s;
  s.crash_id = crash.crash_id;
  s.crash_segment = crash.segment;
  s.start = crash.timestamp;
  int seg = crash.segment;
  for (int gap = 0; gap <= kSessionUpstreamSpan && seg >= 0;
       ++gap, seg = corpus.upstream[seg])
    s.watched.push_back(seg);
  s.boundary_truncated =
      s.watched.size() < static_cast<std::size_t>(kSessionUpstreamSpan + 1);
  auto res = extract_pc_vector(corpus, baselines, crash);
  if (res.ok) s.pc_prob = bundle.pc.model.score(res.vec.values);
  return s;
}

int session_minutes(const MonitoringSession& session, Instant stream_end) {
  const Instant horizon = stream_end - session.start;
  if (horizon < 60) return 0;
  return static_cast<int>(
      std::min<Instant>(kSessionUpdates, horizon / 60));
}

ReplayResult replay_corpus(const Corpus& corpus, const BaselineTable& baselines,
                           const ModelBundle& bundle,
                           const ReplayOptions& opts) {
  ReplayResult result;
  const auto expected = st_schema(bundle.window_count);
  if (bundle.sc1.model.feature_names() != expected->names ||
      bundle.sc2.model.feature_names() != expected->names)
    throw std::invalid_argument(
        "replay: secondary models do not match the bundle window count");

  std::size_t n_sessions = corpus.crashes.size();
  if (opts.max_sessions > 0)
    n_sessions = std::min<std::size_t>(n_sessions, opts.max_sessions);
  for (std::size_t i = 0; i < n_sessions; ++i)
    result.sessions.push_back(
        open_session(corpus, baselines, bundle, corpus.crashes[i]));

  struct Event {
    Instant t;
    int session = 0;
    int minute = 0;
  };
  std::vector<Event> events;
  for (std::size_t i = 0; i < result.sessions.size(); ++i) {
    const int minutes = session_minutes(result.sessions[i], corpus.t_end);
    for (int m = 1; m <= minutes; ++m)
      events.push_back({result.sessions[i].start + 60 * m,
                        static_cast<int>(i), m});
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.t != b.t ? a.t < b.t : a.session < b.session;
  });

  for (const auto& ev : events) {
    const auto& session = result.sessions[ev.session];
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t gap = 0; gap < session.watched.size(); ++gap) {
      const int seg = session.watched[gap];
      auto spec = make_window_spec(corpus, ev.t, seg, session.crash_segment,
                                   bundle.window_count);
      auto res = extract_st_vector(corpus, baselines, spec);
      if (!res.ok) {
        ++result.skipped_vectors;
        continue;
      }
      const double sc1 = bundle.sc1.model.score(res.vec.values);
      const double sc2 = bundle.sc2.model.score(res.vec.values);
      const HybridOutput out =
          hybrid_predict(session.pc_prob, sc1, sc2, bundle);
      if (out.prob > opts.alert_threshold) {
        Alert a;
        a.crash_id = session.crash_id;
        a.segment = seg;
        a.emitted_at = ev.t;
        a.minute = ev.minute;
        a.gap = static_cast<int>(gap);
        a.pc_prob = session.pc_prob;
        a.sc1_prob = sc1;
        a.sc2_prob = sc2;
        a.hybrid_prob = out.prob;
        result.alerts.push_back(std::move(a));
      }
    }
    ++result.updates;
    const std::chrono::duration<double> dt =
        std::chrono::steady_clock::now() - t0;
    result.max_update_seconds = std::max(result.max_update_seconds, dt.count());
  }
  return result;
}

void write_alerts_jsonl(const std::string& path, const Corpus& corpus,
                        const std::vector<Alert>& alerts) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& a : alerts) {
    nlohmann::json j{{"crash_id", a.crash_id},
                     {"segment_id", corpus.segments[a.segment].segment_id},
                     {"emitted_at", format_rfc3339(a.emitted_at)},
                     {"minute", a.minute},
                     {"gap", a.gap},
                     {"pc_prob", a.pc_prob},
                     {"sc1_prob", a.sc1_prob},
                     {"sc2_prob", a.sc2_prob},
                     {"hybrid_prob", a.hybrid_prob}};
    out << j.dump() << "\n";
  }
}

}  // namespace scp
