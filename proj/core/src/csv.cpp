#include "sigvol/csv.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "sigvol/errors.hpp"

namespace sigvol {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw IoError("CSV has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has_column(const std::string& name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

double CsvTable::number(std::size_t row, std::size_t col) const {
  const std::string& s = rows.at(row).at(col);
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw IoError("CSV field '" + s + "' in row " + std::to_string(row + 1) + " is not a number");
  }
  return x;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::stringstream ss(text);
  std::string line;
  bool first = true;
  while (std::getline(ss, line)) {
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (first) {
      t.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw IoError("CSV row has " + std::to_string(fields.size()) + " fields, header has " +
                    std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (first) throw IoError("CSV is empty");
  return t;
}

std::string read_text(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw IoError("cannot open '" + file + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

CsvTable read_csv(const std::string& file) { return parse_csv(read_text(file)); }

void write_text(const std::string& file, const std::string& text) {
  std::ofstream os(file);
  if (!os) throw IoError("cannot open '" + file + "' for writing");
  os << text;
  if (!os) throw IoError("failed writing '" + file + "'");
}

std::string fmt(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

}  // namespace sigvol
