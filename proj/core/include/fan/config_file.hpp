#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace fan {

/// One `key = value` assignment with the line it came from.
struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// ignored; whitespace around keys and values is trimmed. Throws ParseError
/// on a line without '=' or with an empty key.
std::vector<ConfigEntry> parse_config(std::istream& in);
std::vector<ConfigEntry> read_config_file(const std::string& path);

}  // namespace fan
