#pragma once

#include <array>
#include <vector>

#include "carepred/preprocess.hpp"

namespace carepred {

inline constexpr double kSeparator = -1.0;
/// Tokens contributed by one previous hour: hour, SEP, 28 counts, SEP, 28 indicators.
inline constexpr int kTokensPerHour = 1 + 1 + kNumActivities + 1 + kNumActivities;
inline constexpr int kDefaultMaxSeqLen = 1200;
inline constexpr double kTokenScale = 1.0 / 24.0;

using LabelVector = std::array<double, kNumActivities>;

struct EncodedExample {
  std::vector<double> tokens;
  LabelVector target{};
  UserId user_id = 0;
  /// Previous hours actually encoded after truncation.
  int hours_kept = 0;
};

struct EncoderOptions {
  int max_len = kDefaultMaxSeqLen;
  /// Multiply every token by 1/24.
  bool normalize = false;
};

/// Number of most recent previous hours that fit in max_len tokens.
int max_hours_for(int max_len);

/// Flattens a sample into scalar tokens followed by [SEP, next_hour]; drops
/// the oldest hours when the sequence would exceed max_len.
EncodedExample encode_example(const ActivitySample& sample, const EncoderOptions& options = {});

LabelVector activity_indicator(const ActivityList& activities);

}  // namespace carepred
