#include "carepred/activity.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <optional>
#include <string>

#include "carepred/errors.hpp"

namespace carepred {

namespace {

using namespace std::chrono;

// Reads exactly `width` digits starting at text[pos].
bool read_digits(std::string_view text, std::size_t pos, std::size_t width, int& out) {
  if (pos + width > text.size()) return false;
  for (std::size_t i = pos; i < pos + width; ++i) {
    if (text[i] < '0' || text[i] > '9') return false;
  }
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + width, out);
  return ec == std::errc{} && ptr == text.data() + pos + width;
}

std::optional<Date> try_parse_date(std::string_view text) {
  int y = 0, m = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  if (!read_digits(text, 0, 4, y) || !read_digits(text, 5, 2, m) || !read_digits(text, 8, 2, d)) {
    return std::nullopt;
  }
  const Date date{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

}  // namespace

ActivityId::ActivityId(int id) : id_(id) {
  if (id < 1 || id > kNumActivities) {
    throw DomainError("activity id " + std::to_string(id) + " outside [1, 28]");
  }
}

Date parse_date(std::string_view text) {
  if (auto date = try_parse_date(text)) return *date;
  throw ParseError("invalid date '" + std::string(text) + "'");
}

std::string format_date(const Date& date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

Timestamp parse_timestamp(std::string_view text) {
  const auto fail = [&]() -> Timestamp {
    throw ParseError("invalid timestamp '" + std::string(text) + "'");
  };
  if (text.size() != 16 && text.size() != 19) return fail();
  const auto date = try_parse_date(text.substr(0, 10));
  if (!date || (text[10] != 'T' && text[10] != ' ') || text[13] != ':') return fail();
  int hh = 0, mm = 0, ss = 0;
  if (!read_digits(text, 11, 2, hh) || !read_digits(text, 14, 2, mm)) return fail();
  if (text.size() == 19 && (text[16] != ':' || !read_digits(text, 17, 2, ss))) return fail();
  if (hh > 23 || mm > 59 || ss > 59) return fail();
  return sys_days{*date} + hours{hh} + minutes{mm} + seconds{ss};
}

std::string format_timestamp(Timestamp ts) {
  const auto day_start = floor<days>(ts);
  const hh_mm_ss<seconds> tod{ts - day_start};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02d", format_date(Date{day_start}).c_str(),
                static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                static_cast<int>(tod.seconds().count()));
  return buf;
}

Date date_of(Timestamp ts) { return Date{floor<days>(ts)}; }

int hour_of(Timestamp ts) {
  return static_cast<int>(duration_cast<hours>(ts - floor<days>(ts)).count());
}

CareRecord make_record(UserId user, int activity, Timestamp start, Timestamp finish) {
  if (user < 0) throw DomainError("negative user id " + std::to_string(user));
  if (start > finish) {
    throw DomainError("start " + format_timestamp(start) + " after finish " +
                      format_timestamp(finish));
  }
  return CareRecord{user, ActivityId{activity}, start, finish};
}

ActivityList unique_sorted(ActivityList activities) {
  std::sort(activities.begin(), activities.end());
  activities.erase(std::unique(activities.begin(), activities.end()), activities.end());
  return activities;
}

}  // namespace carepred
