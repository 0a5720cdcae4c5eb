#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dlcz/events.hpp"

namespace dlcz {

/// Numeric table written as CSV after the '#' metadata header. Values use the
/// shortest round-trip representation, so output is byte-stable.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row);
  [[nodiscard]] std::string render(const OutputHeader& header) const;
};

/// Throws std::runtime_error naming the path when the file cannot be written.
void write_text_file(const std::filesystem::path& path, std::string_view content);

}  // namespace dlcz
