#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace qvrl {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);

/// Minimal comma-separated table: no quoting, fixed header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::string to_string() const;
  void write(const std::filesystem::path& path) const;
  static CsvTable read(const std::filesystem::path& path);
  std::size_t column(std::string_view name) const;
};

}  // namespace qvrl
