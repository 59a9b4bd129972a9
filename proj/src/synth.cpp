#include "carepred/synth.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <string>

#include "carepred/errors.hpp"

namespace carepred {

namespace {

using namespace std::chrono;

constexpr std::uint32_t kRoutineTag = 0x52545e;
constexpr std::uint32_t kNoiseTag = 0x4e5359;

std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint32_t tag, std::int64_t a, std::int64_t b,
                          std::int64_t c = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag,
                    static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(c)};
  return std::mt19937_64(seq);
}

ActivityList draw_multiset(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(1, 3);
  std::uniform_int_distribution<int> activity(1, kNumActivities);
  ActivityList out;
  const int n = size(rng);
  for (int k = 0; k < n; ++k) out.emplace_back(activity(rng));
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (users.empty()) throw ConfigError("synth: no users");
  if (std::set<UserId>(users.begin(), users.end()).size() != users.size()) {
    throw ConfigError("synth: duplicate user ids");
  }
  for (auto u : users) {
    if (u < 0) throw ConfigError("synth: negative user id");
  }
  if (days < 1) throw ConfigError("synth: days must be >= 1");
  if (hours_per_day < 2 || kFirstSynthHour + hours_per_day > 24) {
    throw ConfigError("synth: hours_per_day must lie in [2, " +
                      std::to_string(24 - kFirstSynthHour) + "]");
  }
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ConfigError("synth: noise_rate must lie in [0, 1)");
  if (!start_date.ok()) throw ConfigError("synth: invalid start date");
}

ActivityList routine_for(const SynthConfig& cfg, UserId user, int hour) {
  if (cfg.routine == RoutineMode::shifted) {
    const auto pos = std::find(cfg.users.begin(), cfg.users.end(), user) - cfg.users.begin();
    auto rng = keyed_rng(cfg.seed, kRoutineTag, -1, (hour + pos) % 24);
    return draw_multiset(rng);
  }
  auto rng = keyed_rng(cfg.seed, kRoutineTag, user, hour);
  return draw_multiset(rng);
}

std::vector<CareRecord> generate(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<UserId> users = cfg.users;
  std::sort(users.begin(), users.end());

  std::vector<CareRecord> records;
  for (auto user : users) {
    for (int d = 0; d < cfg.days; ++d) {
      const sys_days day = sys_days{cfg.start_date} + days{d};
      for (int k = 0; k < cfg.hours_per_day; ++k) {
        const int hour = kFirstSynthHour + k;
        auto noise = keyed_rng(cfg.seed, kNoiseTag, user, d, hour);
        std::bernoulli_distribution replaced(cfg.noise_rate);
        const auto acts = replaced(noise) ? draw_multiset(noise) : routine_for(cfg, user, hour);
        for (std::size_t m = 0; m < acts.size(); ++m) {
          const auto start = day + hours{hour} + minutes{static_cast<int>(m)};
          records.push_back(CareRecord{user, acts[m], start, start + minutes{1}});
        }
      }
    }
  }
  return records;
}

}  // namespace carepred
