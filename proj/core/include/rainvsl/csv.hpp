#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace rainvsl::csv {

/// Splits one line on commas, trimming surrounding whitespace and a trailing CR.
/// Quoted fields are not supported.
std::vector<std::string> split_line(std::string_view line);

/// Reads every non-empty line; the first one is returned as `header`.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;  // 1-based source line of each row
};

Table read(std::istream& in);

/// Parses a finite double; throws ValidationError naming `field` and `line`.
double parse_number(const std::string& text, const std::string& field, int line);

}  // namespace rainvsl::csv
