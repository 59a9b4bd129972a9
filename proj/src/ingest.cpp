#include "carepred/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <string>

#include "carepred/errors.hpp"
#include "carepred/hash.hpp"

namespace carepred {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view kSpace = " \t\r";
  const auto first = s.find_first_not_of(kSpace);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(kSpace);
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    fields.push_back(trim(line.substr(pos, comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return fields;
}

template <class Int>
Int parse_int(std::string_view field, std::size_t line_no, const char* what) {
  Int value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": invalid " + what + " '" +
                     std::string(field) + "'");
  }
  return value;
}

}  // namespace

std::vector<CareRecord> parse_records(std::string_view csv_text) {
  std::vector<CareRecord> records;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (pos <= csv_text.size()) {
    const auto nl = csv_text.find('\n', pos);
    const auto raw = csv_text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? csv_text.size() + 1 : nl + 1;
    ++line_no;
    auto line = trim(raw);
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (line.empty()) continue;

    if (!saw_header) {
      std::string header;
      for (auto f : split_fields(line)) {
        if (!header.empty()) header += ',';
        header += f;
      }
      if (header != kRecordsHeader) {
        throw ParseError("line " + std::to_string(line_no) + ": expected header '" +
                         std::string(kRecordsHeader) + "'");
      }
      saw_header = true;
      continue;
    }

    const auto fields = split_fields(line);
    if (fields.size() != 4) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                       std::to_string(fields.size()));
    }
    const auto user = parse_int<UserId>(fields[0], line_no, "user_id");
    const auto activity = parse_int<int>(fields[1], line_no, "activity_type_id");
    Timestamp start, finish;
    try {
      start = parse_timestamp(fields[2]);
      finish = parse_timestamp(fields[3]);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      records.push_back(make_record(user, activity, start, finish));
    } catch (const DomainError& e) {
      throw DomainError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!saw_header) throw ParseError("line 1: missing header");
  return records;
}

std::vector<CareRecord> read_records(const std::filesystem::path& path) {
  return parse_records(read_file(path));
}

std::string serialize_records(const std::vector<CareRecord>& records) {
  std::string out(kRecordsHeader);
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.user_id);
    out += ',';
    out += std::to_string(r.activity.value());
    out += ',';
    out += format_timestamp(r.start);
    out += ',';
    out += format_timestamp(r.finish);
    out += '\n';
  }
  return out;
}

void write_records(const std::filesystem::path& path, const std::vector<CareRecord>& records) {
  write_file(path, serialize_records(records));
}

std::vector<CareRecord> filter_users(const std::vector<CareRecord>& records,
                                     const std::set<UserId>& allowed) {
  std::vector<CareRecord> kept;
  std::copy_if(records.begin(), records.end(), std::back_inserter(kept),
               [&](const CareRecord& r) { return allowed.contains(r.user_id); });
  return kept;
}

}  // namespace carepred
