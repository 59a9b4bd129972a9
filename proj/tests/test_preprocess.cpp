#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "carepred/errors.hpp"
#include "carepred/ingest.hpp"
#include "carepred/preprocess.hpp"
#include "carepred/synth.hpp"
#include "example_day.hpp"

using namespace carepred;

namespace {

std::vector<ActivitySample> sorted_by_key(std::vector<ActivitySample> v) {
  std::sort(v.begin(), v.end(), [](const ActivitySample& a, const ActivitySample& b) {
    return std::tie(a.user_id, a.date, a.next_hour) < std::tie(b.user_id, b.date, b.next_hour);
  });
  return v;
}

}  // namespace

TEST(ExampleDay, ListedRowsAppearFieldForField) {
  const auto samples = preprocess_records(parse_records(fixtures::kExampleDayCsv));
  for (const auto& row : fixtures::listed_rows()) {
    EXPECT_EQ(std::count(samples.begin(), samples.end(), row), 1)
        << format_date(row.date) << " next " << row.next_hour;
  }
}

TEST(ExampleDay, FullSampleSetIsRowsPlusPrefixes) {
  const auto samples = preprocess_records(parse_records(fixtures::kExampleDayCsv));
  auto expected = fixtures::listed_rows();
  for (auto& s : fixtures::unlisted_prefixes()) expected.push_back(s);
  EXPECT_EQ(samples.size(), 9u);
  EXPECT_EQ(sorted_by_key(samples), sorted_by_key(expected));
  EXPECT_EQ(samples, sorted_by_key(samples));
}

TEST(GroupHourBlocks, TiesKeepFileOrder) {
  const auto recs = parse_records(
      "user_id,activity_type_id,start,finish\n"
      "1,9,2018-05-01T07:30,2018-05-01T07:31\n"
      "1,4,2018-05-01T07:05,2018-05-01T07:06\n"
      "1,2,2018-05-01T07:05,2018-05-01T07:06\n");
  const auto blocks = group_hour_blocks(recs);
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].activities, fixtures::ids({4, 2, 9}));
  EXPECT_EQ(blocks[0].unique_activities, fixtures::ids({2, 4, 9}));
}

TEST(BuildSamples, SingleHourDatesContributeNothing) {
  const auto recs = parse_records(
      "user_id,activity_type_id,start,finish\n"
      "1,9,2018-05-01T07:30,2018-05-01T07:31\n"
      "1,3,2018-05-02T07:30,2018-05-02T07:31\n"
      "1,3,2018-05-02T07:50,2018-05-02T07:51\n");
  EXPECT_TRUE(preprocess_records(recs).empty());
}

TEST(BuildSamples, CountIsHoursMinusOnePerUserDate) {
  SynthConfig cfg;
  cfg.days = 7;
  cfg.hours_per_day = 5;
  cfg.seed = 3;
  cfg.noise_rate = 0.3;
  const auto recs = generate(cfg);
  const auto blocks = group_hour_blocks(recs);
  std::map<std::pair<UserId, Date>, std::size_t> hours;
  for (const auto& b : blocks) ++hours[{b.user_id, b.date}];
  std::size_t expected = 0;
  for (const auto& [key, n] : hours) expected += n - 1;
  const auto samples = build_samples(blocks);
  EXPECT_EQ(samples.size(), expected);
  for (const auto& s : samples) {
    EXPECT_NO_THROW(s.validate());
    EXPECT_TRUE(std::is_sorted(s.previous_hours.begin(), s.previous_hours.end()));
    EXPECT_GT(s.next_hour, s.previous_hours.back());
  }
}

TEST(SampleJson, RoundTripsAndKeepsFieldOrder) {
  const auto samples = preprocess_records(parse_records(fixtures::kExampleDayCsv));
  const auto text = serialize_samples(samples);
  EXPECT_EQ(parse_samples(text), samples);
  const auto line = sample_to_json_line(fixtures::listed_rows()[0]);
  EXPECT_EQ(line,
            "{\"user_id\":25,\"date\":\"2018-05-30\",\"previous_hours\":[7,8],"
            "\"previous_activities\":[[10,23,6,6,6,6],[6]],\"previous_unique\":[[6,10,23],[6]],"
            "\"next_hour\":9,\"next_activities\":[10]}");
}

TEST(SampleJson, RejectsBrokenInvariants) {
  // invariant failures in a file surface as parse errors naming the line
  EXPECT_THROW(sample_from_json_line("{not json"), ParseError);
  // unsorted next_activities
  EXPECT_THROW(sample_from_json_line(
                   "{\"user_id\":25,\"date\":\"2018-05-30\",\"previous_hours\":[7],"
                   "\"previous_activities\":[[6]],\"previous_unique\":[[6]],"
                   "\"next_hour\":9,\"next_activities\":[10,3]}"),
               ParseError);
  // next hour not after the history
  EXPECT_THROW(sample_from_json_line(
                   "{\"user_id\":25,\"date\":\"2018-05-30\",\"previous_hours\":[9],"
                   "\"previous_activities\":[[6]],\"previous_unique\":[[6]],"
                   "\"next_hour\":9,\"next_activities\":[10]}"),
               ParseError);
}

TEST(SplitByDate, PartitionsWithHeldOutDatesLast) {
  SynthConfig cfg;
  cfg.days = 10;
  const auto samples = preprocess_records(generate(cfg));
  const auto split = split_by_date(samples, 0.2);
  EXPECT_EQ(split.train.size() + split.valid.size(), samples.size());
  std::set<Date> train_dates, valid_dates;
  for (const auto& s : split.train) train_dates.insert(s.date);
  for (const auto& s : split.valid) valid_dates.insert(s.date);
  EXPECT_EQ(valid_dates.size(), 2u);
  EXPECT_LT(*train_dates.rbegin(), *valid_dates.begin());
  EXPECT_THROW(split_by_date(samples, 1.0), ConfigError);
}

TEST(SplitByDate, PartitionPropertyOnRandomFractions) {
  SynthConfig cfg;
  cfg.days = 13;
  cfg.noise_rate = 0.4;
  const auto samples = preprocess_records(generate(cfg));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> frac(0.0, 0.99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto split = split_by_date(samples, frac(rng));
    auto joined = split.train;
    joined.insert(joined.end(), split.valid.begin(), split.valid.end());
    EXPECT_EQ(sorted_by_key(joined), sorted_by_key(samples));
  }
}
