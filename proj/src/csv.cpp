#include "quditspam/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

namespace quditspam::csv {

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string &line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string joined(const std::vector<std::string> &names) {
  std::string out;
  for (const auto &n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

} // namespace

std::optional<std::size_t> Table::find_column(const std::string &name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  return std::nullopt;
}

std::size_t Table::column(const std::string &name) const {
  if (auto c = find_column(name)) return *c;
  throw CsvError(source + ": missing column '" + name + "' (have: " + joined(header) + ")");
}

bool Table::missing(std::size_t row, std::size_t col) const {
  const auto &c = cell(row, col);
  return c.empty() || c == "NA";
}

double Table::number(std::size_t row, std::size_t col) const {
  const auto &text = cell(row, col);
  double value = 0.0;
  const auto *end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end)
    throw CsvError(source + ": data row " + std::to_string(row + 1) + ", column '" + header.at(col) +
                   "': not a number: '" + text + "'");
  return value;
}

Table read(std::istream &in, const std::string &source) {
  Table t;
  t.source = source;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    auto cells = split(stripped);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw CsvError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                     " cells, found " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw CsvError(source + ": no header row");
  return t;
}

Table read_file(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open " + path.string());
  return read(in, path.string());
}

} // namespace quditspam::csv
