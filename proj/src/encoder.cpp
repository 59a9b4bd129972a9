#include "carepred/encoder.hpp"

#include <algorithm>
#include <string>

#include "carepred/errors.hpp"

namespace carepred {

int max_hours_for(int max_len) {
  if (max_len < kTokensPerHour + 2) {
    throw ConfigError("max_len " + std::to_string(max_len) + " cannot hold one hour (need >= " +
                      std::to_string(kTokensPerHour + 2) + ")");
  }
  return (max_len - 2) / kTokensPerHour;
}

LabelVector activity_indicator(const ActivityList& activities) {
  LabelVector out{};
  for (auto a : activities) out[static_cast<std::size_t>(a.index())] = 1.0;
  return out;
}

EncodedExample encode_example(const ActivitySample& sample, const EncoderOptions& options) {
  if (options.max_len < kTokensPerHour + 2) {
    throw ConfigError("max sequence length " + std::to_string(options.max_len) +
                      " cannot hold one hour (needs " + std::to_string(kTokensPerHour + 2) + ")");
  }
  sample.validate();

  const int n_prev = static_cast<int>(sample.previous_hours.size());
  const int kept = std::min(n_prev, max_hours_for(options.max_len));
  const double scale = options.normalize ? kTokenScale : 1.0;

  EncodedExample ex;
  ex.user_id = sample.user_id;
  ex.hours_kept = kept;
  ex.tokens.reserve(static_cast<std::size_t>(kTokensPerHour * kept + 2));
  for (int i = n_prev - kept; i < n_prev; ++i) {
    LabelVector freq{};
    for (auto a : sample.previous_activities[static_cast<std::size_t>(i)]) {
      freq[static_cast<std::size_t>(a.index())] += 1.0;
    }
    ex.tokens.push_back(sample.previous_hours[static_cast<std::size_t>(i)]);
    ex.tokens.push_back(kSeparator);
    ex.tokens.insert(ex.tokens.end(), freq.begin(), freq.end());
    ex.tokens.push_back(kSeparator);
    for (double f : freq) ex.tokens.push_back(f > 0.0 ? 1.0 : 0.0);
  }
  ex.tokens.push_back(kSeparator);
  ex.tokens.push_back(sample.next_hour);
  if (scale != 1.0) {
    for (auto& t : ex.tokens) t *= scale;
  }
  ex.target = activity_indicator(sample.next_activities);
  return ex;
}

}  // namespace carepred
