#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace asap {

// A keyed text record: column name -> cell text.
using TextRecord = std::map<std::string, std::string, std::less<>>;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based line number on which each row starts, for diagnostics.
  std::vector<std::size_t> row_lines;
};

// RFC 4180: quoted fields may contain commas, doubled quotes and newlines.
// A leading UTF-8 BOM is skipped. Throws Error(MalformedRecord) on an
// unterminated quote or a row whose width differs from the header.
CsvTable read_csv(std::istream& in);

std::vector<TextRecord> to_records(const CsvTable& table);

void write_csv_row(std::ostream& out, std::span<const std::string> cells);

}  // namespace asap
