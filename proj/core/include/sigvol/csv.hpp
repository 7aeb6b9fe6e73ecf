#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sigvol {

/// A parsed CSV file with a header row. No quoting: fields never contain commas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by header name; IoError when missing.
  [[nodiscard]] std::size_t column(const std::string& name) const;
  [[nodiscard]] bool has_column(const std::string& name) const;
  [[nodiscard]] double number(std::size_t row, std::size_t col) const;
};

[[nodiscard]] CsvTable parse_csv(const std::string& text);
[[nodiscard]] CsvTable read_csv(const std::string& file);

[[nodiscard]] std::string read_text(const std::string& file);
void write_text(const std::string& file, const std::string& text);

/// Shortest round-trip representation of a double.
[[nodiscard]] std::string fmt(double x);

}  // namespace sigvol
