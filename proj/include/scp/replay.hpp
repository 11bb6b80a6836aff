#pragma once

#include "scp/ensemble.hpp"
#include "scp/features.hpp"

namespace scp {

constexpr int kSessionUpdates = 120;       // one per minute for two hours
constexpr int kSessionUpstreamSpan = 5;    // watched: crash + 5 upstream

struct MonitoringSession {
  std::string crash_id;
  int crash_segment = -1;
  Instant start = 0;            // crash timestamp
  std::vector<int> watched;     // crash segment first, then upstream by gap
  bool boundary_truncated = false;  // corridor ended before 5 upstream
  double pc_prob = 0.0;         // broadcast crash score at session open
};

struct Alert {
  std::string crash_id;   // crash whose session raised the alert
  int segment = -1;       // watched segment (corpus index)
  Instant emitted_at = 0;
  int minute = 0;         // 1-based minutes since the crash
  int gap = 0;            // segments upstream of the crash
  double pc_prob = 0, sc1_prob = 0, sc2_prob = 0, hybrid_prob = 0;
};

struct ReplayOptions {
  double alert_threshold = 0.9;
  int max_sessions = 0;   // 0 = a session per crash
};

struct ReplayResult {
  std::vector<MonitoringSession> sessions;
  std::vector<Alert> alerts;  // ordered by (time, session, gap)
  std::size_t updates = 0;            // update events processed
  std::size_t skipped_vectors = 0;    // segment visits with no usable vector
  double max_update_seconds = 0.0;    // slowest single update, wall clock
};

MonitoringSession open_session(const Corpus& corpus,
                               const BaselineTable& baselines,
                               const ModelBundle& bundle,
                               const CrashRecord& crash);

// Updates the stream can still deliver before the two-hour horizon or the
// end of recorded data, whichever comes first.
int session_minutes(const MonitoringSession& session, Instant stream_end);

// Feeds every crash through its monitoring window in global time order and
// collects threshold crossings.
ReplayResult replay_corpus(const Corpus& corpus, const BaselineTable& baselines,
                           const ModelBundle& bundle,
                           const ReplayOptions& opts = {});

void write_alerts_jsonl(const std::string& path, const Corpus& corpus,
                        const std::vector<Alert>& alerts);

}  // namespace scp
