#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "carepred/activity.hpp"

namespace carepred {

/// All activities of one user within one clock hour of one date.
struct HourBlock {
  UserId user_id = 0;
  Date date{};
  int hour = 0;
  ActivityList activities;         // start-time order, duplicates kept
  ActivityList unique_activities;  // sorted, deduplicated

  friend bool operator==(const HourBlock&, const HourBlock&) = default;
};

/// Previous hours of one date -> unique activities of the next recorded hour.
struct ActivitySample {
  UserId user_id = 0;
  Date date{};
  std::vector<int> previous_hours;
  std::vector<ActivityList> previous_activities;
  std::vector<ActivityList> previous_unique;
  int next_hour = 0;
  ActivityList next_activities;

  /// Throws ContractError when the structural invariants do not hold.
  void validate() const;

  friend bool operator==(const ActivitySample&, const ActivitySample&) = default;
};

/// One block per (user, date, hour), sorted by that key. Activities are ordered
/// by start time with file order breaking ties.
std::vector<HourBlock> group_hour_blocks(const std::vector<CareRecord>& records);

/// Emits one prefix sample per hour after the first on every (user, date).
/// Dates with a single recorded hour contribute nothing.
std::vector<ActivitySample> build_samples(const std::vector<HourBlock>& blocks);

inline std::vector<ActivitySample> preprocess_records(const std::vector<CareRecord>& records) {
  return build_samples(group_hour_blocks(records));
}

// JSON Lines dataset files.
std::string sample_to_json_line(const ActivitySample& sample);
ActivitySample sample_from_json_line(std::string_view line, std::size_t line_number = 1);
std::string serialize_samples(const std::vector<ActivitySample>& samples);
std::vector<ActivitySample> parse_samples(std::string_view jsonl_text);
std::vector<ActivitySample> read_samples(const std::filesystem::path& path);
void write_samples(const std::filesystem::path& path, const std::vector<ActivitySample>& samples);

struct DatasetSplit {
  std::vector<ActivitySample> train;
  std::vector<ActivitySample> valid;
};

/// Holds out the last ceil(fraction * D) of the D distinct dates.
DatasetSplit split_by_date(const std::vector<ActivitySample>& samples, double valid_fraction);

std::vector<ActivitySample> samples_for_user(const std::vector<ActivitySample>& samples,
                                             UserId user);

}  // namespace carepred
