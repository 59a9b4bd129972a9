#include "carepred/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

#include "json.hpp"

#include "carepred/errors.hpp"
#include "carepred/hash.hpp"

namespace carepred {

using nlohmann::json;
using nlohmann::ordered_json;

void ActivitySample::validate() const {
  const auto n = previous_hours.size();
  if (n == 0) throw ContractError("sample has no previous hours");
  if (previous_activities.size() != n || previous_unique.size() != n) {
    throw ContractError("previous_hours/activities/unique lengths differ");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int h = previous_hours[i];
    if (h < 0 || h > 23) throw ContractError("previous hour outside [0, 23]");
    if (i > 0 && previous_hours[i - 1] >= h) {
      throw ContractError("previous_hours not strictly increasing");
    }
    if (previous_activities[i].empty()) throw ContractError("empty previous hour");
    if (previous_unique[i] != unique_sorted(previous_activities[i])) {
      throw ContractError("previous_unique does not match previous_activities");
    }
  }
  if (next_hour < 0 || next_hour > 23 || next_hour <= previous_hours.back()) {
    throw ContractError("next_hour must follow every previous hour");
  }
  if (next_activities.empty() || next_activities != unique_sorted(next_activities)) {
    throw ContractError("next_activities must be sorted, unique and non-empty");
  }
}

std::vector<HourBlock> group_hour_blocks(const std::vector<CareRecord>& records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // stable: equal keys keep file order
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = records[a];
    const auto& rb = records[b];
    return std::tuple(ra.user_id, ra.date(), ra.hour(), ra.start) <
           std::tuple(rb.user_id, rb.date(), rb.hour(), rb.start);
  });

  std::vector<HourBlock> blocks;
  for (auto idx : order) {
    const auto& r = records[idx];
    if (blocks.empty() || blocks.back().user_id != r.user_id || blocks.back().date != r.date() ||
        blocks.back().hour != r.hour()) {
      blocks.push_back(HourBlock{r.user_id, r.date(), r.hour(), {}, {}});
    }
    blocks.back().activities.push_back(r.activity);
  }
  for (auto& b : blocks) b.unique_activities = unique_sorted(b.activities);
  return blocks;
}

std::vector<ActivitySample> build_samples(const std::vector<HourBlock>& blocks) {
  std::vector<const HourBlock*> sorted;
  sorted.reserve(blocks.size());
  for (const auto& b : blocks) sorted.push_back(&b);
  std::stable_sort(sorted.begin(), sorted.end(), [](const HourBlock* a, const HourBlock* b) {
    return std::tuple(a->user_id, a->date, a->hour) < std::tuple(b->user_id, b->date, b->hour);
  });

  std::vector<ActivitySample> samples;
  std::size_t begin = 0;
  while (begin < sorted.size()) {
    std::size_t end = begin + 1;
    while (end < sorted.size() && sorted[end]->user_id == sorted[begin]->user_id &&
           sorted[end]->date == sorted[begin]->date) {
      ++end;
    }
    // hours begin..end-1 of one (user, date); each later hour is a target
    for (std::size_t target = begin + 1; target < end; ++target) {
      ActivitySample s;
      s.user_id = sorted[begin]->user_id;
      s.date = sorted[begin]->date;
      for (std::size_t k = begin; k < target; ++k) {
        s.previous_hours.push_back(sorted[k]->hour);
        s.previous_activities.push_back(sorted[k]->activities);
        s.previous_unique.push_back(sorted[k]->unique_activities);
      }
      s.next_hour = sorted[target]->hour;
      s.next_activities = sorted[target]->unique_activities;
      samples.push_back(std::move(s));
    }
    begin = end;
  }
  return samples;
}

namespace {

ordered_json ids_to_json(const ActivityList& list) {
  auto arr = ordered_json::array();
  for (auto a : list) arr.push_back(a.value());
  return arr;
}

ActivityList ids_from_json(const json& j) {
  ActivityList out;
  for (const auto& v : j) out.emplace_back(v.get<int>());
  return out;
}

}  // namespace

std::string sample_to_json_line(const ActivitySample& s) {
  ordered_json j;
  j["user_id"] = s.user_id;
  j["date"] = format_date(s.date);
  j["previous_hours"] = s.previous_hours;
  auto prev = ordered_json::array();
  for (const auto& l : s.previous_activities) prev.push_back(ids_to_json(l));
  j["previous_activities"] = std::move(prev);
  auto uniq = ordered_json::array();
  for (const auto& l : s.previous_unique) uniq.push_back(ids_to_json(l));
  j["previous_unique"] = std::move(uniq);
  j["next_hour"] = s.next_hour;
  j["next_activities"] = ids_to_json(s.next_activities);
  return j.dump();
}

ActivitySample sample_from_json_line(std::string_view line, std::size_t line_number) {
  const auto where = "line " + std::to_string(line_number) + ": ";
  try {
    const auto j = json::parse(line);
    ActivitySample s;
    s.user_id = j.at("user_id").get<UserId>();
    s.date = parse_date(j.at("date").get<std::string>());
    s.previous_hours = j.at("previous_hours").get<std::vector<int>>();
    for (const auto& l : j.at("previous_activities")) s.previous_activities.push_back(ids_from_json(l));
    for (const auto& l : j.at("previous_unique")) s.previous_unique.push_back(ids_from_json(l));
    s.next_hour = j.at("next_hour").get<int>();
    s.next_activities = ids_from_json(j.at("next_activities"));
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ParseError(where + e.what());
  } catch (const ContractError& e) {
    throw ParseError(where + e.what());
  } catch (const DomainError& e) {
    throw DomainError(where + e.what());
  } catch (const ParseError& e) {
    throw ParseError(where + e.what());
  }
}

std::string serialize_samples(const std::vector<ActivitySample>& samples) {
  std::string out;
  for (const auto& s : samples) {
    out += sample_to_json_line(s);
    out += '\n';
  }
  return out;
}

std::vector<ActivitySample> parse_samples(std::string_view text) {
  std::vector<ActivitySample> samples;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    samples.push_back(sample_from_json_line(line, line_no));
  }
  return samples;
}

std::vector<ActivitySample> read_samples(const std::filesystem::path& path) {
  return parse_samples(read_file(path));
}

void write_samples(const std::filesystem::path& path, const std::vector<ActivitySample>& samples) {
  write_file(path, serialize_samples(samples));
}

DatasetSplit split_by_date(const std::vector<ActivitySample>& samples, double valid_fraction) {
  if (!(valid_fraction >= 0.0 && valid_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in [0, 1)");
  }
  std::set<Date> dates;
  for (const auto& s : samples) dates.insert(s.date);
  const auto n_valid =
      static_cast<std::size_t>(std::ceil(valid_fraction * static_cast<double>(dates.size())));
  std::set<Date> valid_dates;
  auto it = dates.rbegin();
  for (std::size_t i = 0; i < n_valid && it != dates.rend(); ++i, ++it) valid_dates.insert(*it);

  DatasetSplit split;
  for (const auto& s : samples) {
    (valid_dates.contains(s.date) ? split.valid : split.train).push_back(s);
  }
  return split;
}

std::vector<ActivitySample> samples_for_user(const std::vector<ActivitySample>& samples,
                                             UserId user) {
  std::vector<ActivitySample> out;
  std::copy_if(samples.begin(), samples.end(), std::back_inserter(out),
               [&](const ActivitySample& s) { return s.user_id == user; });
  return out;
}

}  // namespace carepred
