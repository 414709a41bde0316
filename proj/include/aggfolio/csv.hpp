#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace aggfolio::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

/// Reads a comma-separated file with a header line. Fields are not quoted;
/// blank lines are skipped. Throws Error(Data) when a row's width differs
/// from the header's.
Table read(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view line, char separator = ',');

/// Shortest decimal text that parses back to the same double.
std::string format(double value);

/// Parses a double; an empty field yields NaN when `allow_missing`.
double parse_double(std::string_view text, const std::string& context, bool allow_missing = false);
std::int64_t parse_int(std::string_view text, const std::string& context);

/// Column position in the header, or Error(Schema).
std::size_t column(const Table& table, std::string_view name, const std::string& file);

}  // namespace aggfolio::csv
