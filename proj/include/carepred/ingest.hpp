#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "carepred/activity.hpp"

namespace carepred {

inline constexpr std::string_view kRecordsHeader = "user_id,activity_type_id,start,finish";

/// Nurse users of the third challenge's label data.
inline const std::set<UserId> kThirdChallengeNurses = {5, 6, 7, 9, 12, 17, 19, 21, 22};

/// Parses care-record CSV. Records come back in file order, which later serves
/// as the tie-break for activities sharing a start time.
std::vector<CareRecord> parse_records(std::string_view csv_text);
std::vector<CareRecord> read_records(const std::filesystem::path& path);

std::string serialize_records(const std::vector<CareRecord>& records);
void write_records(const std::filesystem::path& path, const std::vector<CareRecord>& records);

/// Order-preserving subset of records whose user is in `allowed`.
std::vector<CareRecord> filter_users(const std::vector<CareRecord>& records,
                                     const std::set<UserId>& allowed);

}  // namespace carepred
