#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace cve {

/// Minimal CSV: comma-separated, no quoting, optional trailing CR. Blank
/// lines are skipped. The first row is the header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws IoError when absent.
    std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace cve
