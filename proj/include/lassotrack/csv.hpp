#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "lassotrack/errors.hpp"

namespace lassotrack::csv {

// Splits one CSV line. Supports double-quoted fields with "" escapes; embedded
// newlines are not supported (rows are line-delimited throughout this project).
inline std::vector<std::string> split_line(const std::string& line, std::size_t row_number) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            if (!cur.empty())
                throw io_error("malformed row " + std::to_string(row_number) +
                               ": quote inside unquoted field");
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted)
        throw io_error("malformed row " + std::to_string(row_number) + ": unterminated quote");
    fields.push_back(cur);
    return fields;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Reads an entire header-plus-rows CSV stream. Rows must have exactly as many
// fields as the header. Trailing blank lines are ignored; CRLF is tolerated.
inline Table read_table(std::istream& in) {
    Table table;
    std::string line;
    std::size_t row_number = 0;
    while (std::getline(in, line)) {
        ++row_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_line(line, row_number);
        if (table.header.empty()) {
            table.header = std::move(fields);
        } else {
            if (fields.size() != table.header.size())
                throw io_error("malformed row " + std::to_string(row_number) + ": expected " +
                               std::to_string(table.header.size()) + " fields, found " +
                               std::to_string(fields.size()));
            table.rows.push_back(std::move(fields));
        }
    }
    if (table.header.empty()) throw io_error("empty CSV: no header row");
    return table;
}

inline std::string quote_if_needed(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << quote_if_needed(fields[i]);
    }
    out << '\n';
}

} // namespace lassotrack::csv
