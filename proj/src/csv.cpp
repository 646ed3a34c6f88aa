#include "asap/csv.hpp"

#include <istream>
#include <iterator>
#include <ostream>

#include "asap/error.hpp"

namespace asap {

CsvTable read_csv(std::istream& in) {
  std::string data{std::istreambuf_iterator<char>(in),
                   std::istreambuf_iterator<char>()};
  std::size_t pos = 0;
  if (data.size() >= 3 && data.compare(0, 3, "\xEF\xBB\xBF") == 0) pos = 3;

  CsvTable table;
  std::vector<std::string> row;
  std::string cell;
  std::size_t line = 1;
  std::size_t row_start = 1;
  bool in_quotes = false;
  bool row_has_content = false;

  auto finish_row = [&] {
    row.push_back(std::move(cell));
    cell.clear();
    if (table.header.empty()) {
      table.header = std::move(row);
    } else {
      if (row.size() != table.header.size()) {
        throw Error(ErrorKind::MalformedRecord,
                    "line " + std::to_string(row_start) + ": expected " +
                        std::to_string(table.header.size()) + " fields, got " +
                        std::to_string(row.size()));
      }
      table.rows.push_back(std::move(row));
      table.row_lines.push_back(row_start);
    }
    row.clear();
    row_has_content = false;
  };

  for (; pos < data.size(); ++pos) {
    const char c = data[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < data.size() && data[pos + 1] == '"') {
          cell.push_back('"');
          ++pos;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        cell.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        row.push_back(std::move(cell));
        cell.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_content || !cell.empty()) finish_row();
        ++line;
        row_start = line;
        break;
      default:
        cell.push_back(c);
        row_has_content = true;
    }
  }
  if (in_quotes) {
    throw Error(ErrorKind::MalformedRecord,
                "line " + std::to_string(row_start) + ": unterminated quote");
  }
  if (row_has_content || !cell.empty()) finish_row();
  return table;
}

std::vector<TextRecord> to_records(const CsvTable& table) {
  std::vector<TextRecord> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    TextRecord rec;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
      rec.emplace(table.header[i], row[i]);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_csv_row(std::ostream& out, std::span<const std::string> cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    const auto& s = cells[i];
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
      out << s;
      continue;
    }
    out << '"';
    for (char c : s) {
      if (c == '"') out << '"';
      out << c;
    }
    out << '"';
  }
  out << '\n';
}

}  // namespace asap
