#include "fan/request_log.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>
#include <unordered_map>

#include "fan/errors.hpp"

namespace fan {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
T parse_number(std::string_view field, const char* what) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw ParseError(std::string("invalid ") + what + " '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

std::string validate_record(const RequestRecord& record) {
  if (record.impressions.empty()) return "request has no impressions";
  for (std::size_t i = 0; i < record.impressions.size(); ++i) {
    if (record.impressions[i].position != i) {
      return "impression positions must be consecutive from 0 (position " +
             std::to_string(record.impressions[i].position) + " at index " + std::to_string(i) + ")";
    }
  }
  return {};
}

RequestRecord parse_request_line(const std::string& line) {
  std::string_view text(line);
  if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
  const auto fields = split(text, '\t');
  if (fields.size() != 4) {
    throw ParseError("expected 4 tab-separated fields, found " + std::to_string(fields.size()));
  }
  RequestRecord record;
  record.request_id = parse_number<std::uint64_t>(fields[0], "request_id");
  record.user_id = parse_number<std::uint64_t>(fields[1], "user_id");
  record.timestamp = parse_number<Timestamp>(fields[2], "timestamp");
  if (fields[3].empty()) throw ParseError("request has no impressions");
  for (auto entry : split(fields[3], ',')) {
    const auto parts = split(entry, ':');
    if (parts.size() != 5) throw ParseError("impression '" + std::string(entry) + "' needs 5 ':'-separated fields");
    Impression imp;
    imp.position = parse_number<std::uint32_t>(parts[0], "position");
    imp.item_id = parse_number<std::uint64_t>(parts[1], "item_id");
    imp.category_id = parse_number<std::uint64_t>(parts[2], "category_id");
    imp.brand_id = parse_number<std::uint64_t>(parts[3], "brand_id");
    const auto clicked = parse_number<int>(parts[4], "clicked flag");
    if (clicked != 0 && clicked != 1) throw ParseError("clicked flag must be 0 or 1");
    imp.clicked = clicked == 1;
    record.impressions.push_back(imp);
  }
  if (auto problem = validate_record(record); !problem.empty()) throw ParseError(problem);
  return record;
}

std::string format_request_line(const RequestRecord& record) {
  std::string out = std::to_string(record.request_id) + '\t' + std::to_string(record.user_id) + '\t' +
                    std::to_string(record.timestamp) + '\t';
  for (std::size_t i = 0; i < record.impressions.size(); ++i) {
    const auto& imp = record.impressions[i];
    if (i != 0) out += ',';
    out += std::to_string(imp.position) + ':' + std::to_string(imp.item_id) + ':' + std::to_string(imp.category_id) +
           ':' + std::to_string(imp.brand_id) + ':' + (imp.clicked ? '1' : '0');
  }
  return out;
}

LogReadResult read_request_log(std::istream& in) {
  LogReadResult result;
  std::unordered_map<std::uint64_t, Timestamp> last_seen;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    try {
      auto record = parse_request_line(line);
      auto [it, inserted] = last_seen.try_emplace(record.user_id, record.timestamp);
      if (!inserted) {
        if (record.timestamp < it->second) {
          throw ParseError("timestamp " + std::to_string(record.timestamp) + " earlier than previous request " +
                           std::to_string(it->second) + " of user " + std::to_string(record.user_id));
        }
        it->second = record.timestamp;
      }
      result.records.push_back(std::move(record));
    } catch (const ParseError& e) {
      result.skipped.push_back({number, e.what()});
    }
  }
  return result;
}

LogReadResult read_request_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open log file '" + path + "'");
  return read_request_log(in);
}

void write_request_log(std::ostream& out, const std::vector<RequestRecord>& records) {
  for (const auto& record : records) out << format_request_line(record) << '\n';
}

}  // namespace fan
