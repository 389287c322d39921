#pragma once
// Command-line front end. run() is the whole program minus process exit so it
// can be driven from tests.

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace quditspam::cli {

/// Runs one invocation; argv[0] is the program name. Returns the exit code.
int run(const std::vector<std::string> &argv, std::ostream &out, std::ostream &err);

/// Arguments after applying precedence: defaults < preset < config file < flags.
/// Throws std::invalid_argument for unreadable configs or unknown config keys.
std::vector<std::string> assemble_arguments(const std::vector<std::string> &argv);

using Cell = std::variant<double, std::string>;

struct DataTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

/// Doubles print in shortest round-trip form; NaN prints as NA.
void write_csv(std::ostream &out, const DataTable &table);
std::string format_cell(const Cell &cell);

} // namespace quditspam::cli
