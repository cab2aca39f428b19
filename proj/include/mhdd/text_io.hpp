#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace mhdd {

/// printf-style %.{digits}g rendering; 17 digits round-trips every double.
std::string format_double(double v, int digits = 17);

/// Parse a full-string double; throws std::invalid_argument on trailing junk.
double parse_double(std::string_view s);

std::string read_file(const std::string& path);

/// Writes via a sibling temp file and rename, so readers never see a partial file.
void write_file_atomic(const std::string& path, std::string_view content);

/// `key=value` lines; blank lines and lines starting with '#' are ignored.
std::map<std::string, std::string> parse_key_values(std::string_view text);

std::uint32_t crc32_of(std::string_view data);

std::string trim(std::string_view s);

}  // namespace mhdd
