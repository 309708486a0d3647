#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "biobj/core.hpp"

namespace biobj::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // cell text, trimmed
    std::vector<std::size_t> line_numbers;       // 1-based source line per row
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace detail

inline Table read(std::istream& in) {
    Table t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_row(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
        } else {
            if (cells.size() != t.header.size())
                throw ParseError("expected " + std::to_string(t.header.size()) +
                                     " columns, got " + std::to_string(cells.size()),
                                 line_no);
            t.rows.push_back(std::move(cells));
            t.line_numbers.push_back(line_no);
        }
    }
    if (t.header.empty()) throw ParseError("missing header row", line_no == 0 ? 1 : line_no);
    return t;
}

inline Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return read(in);
}

inline std::size_t column(const Table& t, const std::string& name) {
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i] == name) return i;
    throw ParseError("missing column '" + name + "'", 1);
}

inline double to_double(const std::string& cell, std::size_t line_no) {
    double v{};
    const char* first = cell.data();
    const char* last = first + cell.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || p != last)
        throw ParseError("not a number: '" + cell + "'", line_no);
    return v;
}

inline int to_int(const std::string& cell, std::size_t line_no) {
    int v{};
    const char* first = cell.data();
    const char* last = first + cell.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || p != last)
        throw ParseError("not an integer: '" + cell + "'", line_no);
    return v;
}

}  // namespace biobj::csv
