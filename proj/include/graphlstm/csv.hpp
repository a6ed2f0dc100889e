#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace glstm::csv {

using Row = std::vector<std::string>;

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
Row split_line(std::string_view line);

/// Reads all non-empty records; strips a UTF-8 BOM and trailing CR.
std::vector<Row> read(std::istream& in);
std::vector<Row> read_file(const std::filesystem::path& path);

/// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

double parse_double(const std::string& text, std::string_view what);
long long parse_int(const std::string& text, std::string_view what);

}  // namespace glstm::csv
