#include "csv.hpp"

#include <charconv>
#include <cmath>

#include "tagteam/error.hpp"

namespace tagteam::detail {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad(std::size_t line, std::string_view column, const std::string& text) {
  throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": column '" + std::string(column) +
                                    "': cannot parse '" + text + "'");
}

}  // namespace

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) return out;
    start = comma + 1;
  }
}

void expect_header(std::istream& in, std::string_view expected) {
  std::string header;
  if (!std::getline(in, header)) {
    throw Error(ErrorKind::Parse, "line 1: missing header '" + std::string(expected) + "'");
  }
  if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
  std::string joined;
  for (const auto& cell : split_csv_line(header)) {
    if (!joined.empty()) joined += ',';
    joined += cell;
  }
  if (joined != expected) {
    throw Error(ErrorKind::Parse, "line 1: expected header '" + std::string(expected) + "', got '" + header + "'");
  }
}

double parse_double(const std::string& text, std::size_t line, std::string_view column) {
  if (text.empty()) bad(line, column, text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    bad(line, column, text);
  }
  if (used != text.size() || !std::isfinite(v)) bad(line, column, text);
  return v;
}

long long parse_int(const std::string& text, std::size_t line, std::string_view column) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) bad(line, column, text);
  return v;
}

}  // namespace tagteam::detail
