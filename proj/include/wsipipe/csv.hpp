#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wsipipe/errors.hpp"

namespace wsipipe {

// Minimal CSV support for the pipeline's plain tables: comma separation, no
// quoting (none of our fields contain commas), first row is the header.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;
  const std::string& cell(std::size_t row, const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Fixed-precision formatting so re-runs produce byte-identical artifacts.
std::string fmt_double(double v, int precision = 6);

}  // namespace wsipipe
