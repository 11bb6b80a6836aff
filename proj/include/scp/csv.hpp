#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace scp {

// Minimal strict CSV: comma-separated, newline rows, no quoting (none of the
// corpus schemas carry free text). CRLF tolerated on read.
struct CsvRow {
  std::size_t line = 0;  // 1-based physical line in the file
  std::vector<std::string> fields;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<CsvRow> rows;
};

// Throws std::runtime_error on unreadable file or missing/mismatched header.
// An empty expected_header accepts any header.
CsvTable read_csv(const std::string& path,
                  const std::vector<std::string>& expected_header = {});

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Shortest round-trip decimal form of a double (to_chars).
std::string format_double(double v);

std::optional<double> parse_double(const std::string& s);
std::optional<std::int64_t> parse_i64(const std::string& s);

}  // namespace scp
