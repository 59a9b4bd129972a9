#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace carepred {

inline constexpr int kNumActivities = 28;

/// Activity type in [1, 28]. Construction outside that range throws DomainError.
class ActivityId {
 public:
  explicit ActivityId(int id);

  int value() const noexcept { return id_; }
  /// Zero-based position in 28-wide label vectors.
  int index() const noexcept { return id_ - 1; }

  friend auto operator<=>(const ActivityId&, const ActivityId&) = default;

 private:
  int id_;
};

using UserId = std::int64_t;
using Date = std::chrono::year_month_day;
/// Timezone-naive wall-clock instant with second resolution.
using Timestamp = std::chrono::sys_seconds;

/// "YYYY-MM-DD"; throws ParseError on malformed or impossible dates.
Date parse_date(std::string_view text);
std::string format_date(const Date& date);

/// "YYYY-MM-DDTHH:MM[:SS]" (a space is accepted in place of 'T').
Timestamp parse_timestamp(std::string_view text);
/// Always "YYYY-MM-DDTHH:MM:SS".
std::string format_timestamp(Timestamp ts);

Date date_of(Timestamp ts);
int hour_of(Timestamp ts);

struct CareRecord {
  UserId user_id = 0;
  ActivityId activity{1};
  Timestamp start{};
  Timestamp finish{};

  Date date() const { return date_of(start); }
  int hour() const { return hour_of(start); }

  friend bool operator==(const CareRecord&, const CareRecord&) = default;
};

/// Builds a CareRecord, enforcing start <= finish (DomainError otherwise).
CareRecord make_record(UserId user, int activity, Timestamp start, Timestamp finish);

using ActivityList = std::vector<ActivityId>;

/// Sorted ascending, duplicates removed.
ActivityList unique_sorted(ActivityList activities);

}  // namespace carepred
