#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace scp {

// Unix seconds, UTC. All corpus timestamps use this representation.
using Instant = std::int64_t;

constexpr Instant kBinSeconds = 300;        // 5-minute aggregation bins
constexpr int kSlotsPerDay = 288;
constexpr Instant kDaySeconds = 86400;

// Parses "YYYY-MM-DDTHH:MM:SSZ" (strict RFC3339, UTC only, no fraction).
std::optional<Instant> parse_rfc3339(const std::string& s);

std::string format_rfc3339(Instant t);

inline Instant bin_start_of(Instant t) {
  return (t / kBinSeconds) * kBinSeconds;
}

// Time-of-day slot index in [0, 287].
inline int slot_of_day(Instant t) {
  return static_cast<int>((t % kDaySeconds) / kBinSeconds);
}

inline std::int64_t day_index(Instant t) { return t / kDaySeconds; }

// 0 = Monday ... 6 = Sunday.
int day_of_week(Instant t);

inline bool is_weekday(Instant t) { return day_of_week(t) < 5; }

inline int hour_of_day(Instant t) {
  return static_cast<int>((t % kDaySeconds) / 3600);
}

}  // namespace scp
