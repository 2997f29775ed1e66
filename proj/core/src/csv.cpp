#include "headlock/csv.hpp"

#include <cctype>
#include <fstream>

#include "headlock/errors.hpp"

namespace headlock {

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

CsvTable CsvTable::read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "' for reading");

    CsvTable table;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool any_field = false;

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        any_field = true;
    };
    auto end_record = [&] {
        if (field.empty() && record.empty() && !any_field) return;  // skip blank lines
        end_field();
        any_field = false;
        if (table.header_.empty())
            table.header_ = std::move(record);
        else if (record.size() != table.header_.size())
            throw DataError(path.filename().string() + ": row " +
                            std::to_string(table.rows_.size() + 2) + " has " +
                            std::to_string(record.size()) + " fields, header has " +
                            std::to_string(table.header_.size()));
        else
            table.rows_.push_back(std::move(record));
        record.clear();
    };

    char c;
    while (in.get(c)) {
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            if (!field.empty() && field.back() == '\r') field.pop_back();
            end_record();
        } else {
            field += c;
        }
    }
    if (in_quotes) throw DataError(path.filename().string() + ": unterminated quoted field");
    if (!field.empty() || any_field || !record.empty()) end_record();
    if (table.header_.empty()) throw DataError(path.filename().string() + ": missing header row");
    return table;
}

int CsvTable::column(const std::string& name) const {
    const std::string want = lower(name);
    for (std::size_t i = 0; i < header_.size(); ++i)
        if (lower(header_[i]) == want) return static_cast<int>(i);
    return -1;
}

}  // namespace headlock
