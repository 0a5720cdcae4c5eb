#include "dlcz/csv.hpp"

#include <fmt/format.h>

#include <fstream>
#include <stdexcept>

namespace dlcz {

void CsvTable::add(std::vector<double> row) {
  if (row.size() != columns.size()) {
    throw std::logic_error(fmt::format("csv row has {} values for {} columns", row.size(), columns.size()));
  }
  rows.push_back(std::move(row));
}

std::string CsvTable::render(const OutputHeader& header) const {
  std::string out = header.render();
  out += fmt::format("{}\n", fmt::join(columns, ","));
  for (const auto& r : rows) out += fmt::format("{}\n", fmt::join(r, ","));
  return out;
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw std::runtime_error(fmt::format("write failed for '{}'", path.string()));
}

}  // namespace dlcz
