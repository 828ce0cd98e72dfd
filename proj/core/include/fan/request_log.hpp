#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fan {

using Timestamp = std::int64_t;  // seconds since epoch
inline constexpr Timestamp kSecondsPerDay = 86400;

struct Impression {
  std::uint64_t item_id = 0;
  std::uint64_t category_id = 0;
  std::uint64_t brand_id = 0;
  bool clicked = false;
  std::uint32_t position = 0;

  friend bool operator==(const Impression&, const Impression&) = default;
};

/// One recommendation request served to one user.
struct RequestRecord {
  std::uint64_t request_id = 0;
  std::uint64_t user_id = 0;
  Timestamp timestamp = 0;
  std::vector<Impression> impressions;

  friend bool operator==(const RequestRecord&, const RequestRecord&) = default;
};

struct LogIssue {
  std::size_t line = 0;
  std::string message;
};

struct LogReadResult {
  std::vector<RequestRecord> records;
  std::vector<LogIssue> skipped;
};

// Log line layout (tab separated):
//   request_id  user_id  timestamp  impressions
// impressions is a comma-separated list of position:item:category:brand:clicked
// with positions 0,1,2,... in order and clicked in {0,1}.

/// Parses one line; throws ParseError describing the first problem.
RequestRecord parse_request_line(const std::string& line);
std::string format_request_line(const RequestRecord& record);

/// Reads a whole log. Malformed lines, and lines whose timestamp goes
/// backwards for their user, are skipped and reported with 1-based line
/// numbers. Blank lines and lines starting with '#' are ignored.
LogReadResult read_request_log(std::istream& in);
LogReadResult read_request_log_file(const std::string& path);

void write_request_log(std::ostream& out, const std::vector<RequestRecord>& records);

/// Structural checks on a single record (non-empty, consecutive positions).
/// Returns an empty string when valid.
std::string validate_record(const RequestRecord& record);

}  // namespace fan
