#pragma once
// Minimal CSV reading for fixtures and fit inputs: comma separated, first row
// is the header, blank lines and lines starting with '#' are skipped. No quoting.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace quditspam::csv {

class CsvError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Table {
  std::string source; // for diagnostics
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Throws CsvError naming the missing column and the columns present.
  std::size_t column(const std::string &name) const;
  std::optional<std::size_t> find_column(const std::string &name) const;
  /// Throws CsvError with row/column context if the cell is not a number.
  double number(std::size_t row, std::size_t col) const;
  double number(std::size_t row, const std::string &col) const { return number(row, column(col)); }
  /// Empty or "NA" cells.
  bool missing(std::size_t row, std::size_t col) const;
  const std::string &cell(std::size_t row, std::size_t col) const { return rows.at(row).at(col); }
};

/// Every data row must have as many cells as the header.
Table read(std::istream &in, const std::string &source = "<stream>");
Table read_file(const std::filesystem::path &path);

} // namespace quditspam::csv
