#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trialcea {

/// Splits one delimited line. Double-quoted fields may contain the delimiter;
/// a doubled quote inside quotes is a literal quote.
std::vector<std::string> split_delimited(std::string_view line, char delimiter);

void strip_cr(std::string& line);

/// Whole-string parse; surrounding blanks are ignored.
std::optional<double> parse_double(std::string_view s);

/// Shortest text that parses back to exactly the same double.
std::string format_double(double v);

/// Writes via a temporary file in the same directory, then renames.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::vector<double> parse_double_list(std::string_view csv);

}  // namespace trialcea
