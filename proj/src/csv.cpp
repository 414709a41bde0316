#include "aggfolio/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "aggfolio/error.hpp"

namespace aggfolio::csv {

std::vector<std::string> split(std::string_view line, char separator) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find(separator, start);
    if (end == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, end - start));
    start = end + 1;
  }
  return fields;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Data, "cannot open " + path.string());
  Table table;
  std::string line;
  std::size_t number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    require(fields.size() == table.header.size(), ErrorKind::Data,
            path.string() + ":" + std::to_string(number) + ": expected " + std::to_string(table.header.size()) +
                " fields, got " + std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(number);
  }
  require(have_header, ErrorKind::Data, path.string() + ": missing header line");
  return table;
}

std::string format(double value) {
  if (std::isnan(value)) return "";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  require(ec == std::errc{}, ErrorKind::Invariant, "double formatting failed");
  return std::string(buf, end);
}

double parse_double(std::string_view text, const std::string& context, bool allow_missing) {
  if (text.empty()) {
    require(allow_missing, ErrorKind::Data, context + ": missing value");
    return std::numeric_limits<double>::quiet_NaN();
  }
  double value = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  require(ec == std::errc{} && end == text.data() + text.size(), ErrorKind::Data,
          context + ": cannot parse '" + std::string(text) + "' as a number");
  return value;
}

std::int64_t parse_int(std::string_view text, const std::string& context) {
  std::int64_t value = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  require(!text.empty() && ec == std::errc{} && end == text.data() + text.size(), ErrorKind::Data,
          context + ": cannot parse '" + std::string(text) + "' as an integer");
  return value;
}

std::size_t column(const Table& table, std::string_view name, const std::string& file) {
  for (std::size_t i = 0; i < table.header.size(); ++i)
    if (table.header[i] == name) return i;
  fail(ErrorKind::Schema, file + ": missing column '" + std::string(name) + "'");
}

}  // namespace aggfolio::csv
