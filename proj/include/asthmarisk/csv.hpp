#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace asthmarisk::csv {

// Splits one CSV line. Double-quoted fields with "" escapes are accepted;
// canonical files written by this project never need quoting.
std::vector<std::string> split_line(const std::string& line);

std::string join_line(const std::vector<std::string>& fields);

// Reads all rows of a CSV file. First row is the header. Throws on
// missing/unreadable file. Trailing \r (CRLF input) is stripped; blank
// lines are skipped. line_numbers[i] is the 1-based physical line of
// rows[i], for reject reporting.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};
Table read_file(const std::string& path);

}  // namespace asthmarisk::csv
