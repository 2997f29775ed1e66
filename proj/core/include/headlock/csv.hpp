#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace headlock {

// Minimal RFC-4180 reader: quoted fields, doubled quotes, embedded commas
// and newlines. Header row required. Enough for MIMIC-style exports.
class CsvTable {
public:
    static CsvTable read_file(const std::filesystem::path& path);

    const std::vector<std::string>& header() const { return header_; }
    std::size_t row_count() const { return rows_.size(); }
    const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }

    // Column index by (case-insensitive) name, or -1.
    int column(const std::string& name) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace headlock
