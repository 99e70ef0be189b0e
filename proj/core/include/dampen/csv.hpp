#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dampen {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws std::runtime_error naming the column
  /// when absent.
  std::size_t column(const std::string& name) const;
};

/// RFC 4180-style parser: quoted fields, doubled quotes, CR/LF endings, BOM
/// stripped. Short rows are padded with empty fields.
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

/// Quotes a field when it contains commas, quotes, or newlines.
std::string csv_escape(const std::string& field);

}  // namespace dampen
