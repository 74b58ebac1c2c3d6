#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace erfe {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws ParseError if absent.
  std::size_t column(std::string_view name) const;
};

// RFC-4180-style reader: comma separated, double-quoted fields may contain
// commas and doubled quotes. Blank lines are skipped; a header row is required.
CsvTable read_csv(std::istream& in);

// Strict decimal parse ('.' separator). `context` is used in the error message.
double parse_double(std::string_view text, std::string_view context);

// 17 significant digits, enough to round-trip any double.
std::string format_number(double value);

// Quotes a field if it contains a comma, quote or newline.
std::string csv_escape(std::string_view field);

}  // namespace erfe
