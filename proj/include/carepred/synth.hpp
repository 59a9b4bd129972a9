#pragma once

#include <cstdint>
#include <vector>

#include "carepred/activity.hpp"

namespace carepred {

enum class RoutineMode {
  /// Every (user, hour) gets its own hashed routine.
  independent,
  /// One shared daily routine, offset in time by the user's position in the
  /// user list: routine(u, h) = base(h + k_u).
  shifted,
};

struct SynthConfig {
  std::vector<UserId> users = {8, 13, 14, 15, 25};
  int days = 60;
  int hours_per_day = 8;
  double noise_rate = 0.0;
  std::uint64_t seed = 0;
  RoutineMode routine = RoutineMode::independent;
  Date start_date = Date{std::chrono::year{2018}, std::chrono::month{5}, std::chrono::day{1}};

  void validate() const;
};

inline constexpr int kFirstSynthHour = 7;

/// Deterministic activity multiset (1-3 entries) for one user and hour.
ActivityList routine_for(const SynthConfig& cfg, UserId user, int hour);

/// Records for every user and day, sorted by (user, date, start).
std::vector<CareRecord> generate(const SynthConfig& cfg);

}  // namespace carepred
