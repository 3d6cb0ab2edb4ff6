#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace tagteam::detail {

/// Splits one CSV line on commas and trims surrounding whitespace. No quoting.
std::vector<std::string> split_csv_line(std::string_view line);

/// Reads the header line and checks it matches `expected` exactly.
void expect_header(std::istream& in, std::string_view expected);

/// Parses a double, throwing Error(Parse) tagged with `line` and `column`.
double parse_double(const std::string& text, std::size_t line, std::string_view column);
long long parse_int(const std::string& text, std::size_t line, std::string_view column);

}  // namespace tagteam::detail
