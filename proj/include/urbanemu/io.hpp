#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace urbanemu::io {

/// Writes `content` to `path` via a sibling temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double x);

std::vector<std::string_view> split_csv_line(std::string_view line);

/// Strict parse of a full field as a double; empty fields yield NaN.
double parse_double(std::string_view field, std::size_t line_no, std::string_view column);

}  // namespace urbanemu::io
