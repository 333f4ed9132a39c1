#include "dla/table.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dla::cli {

std::string Table::format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void Table::add_row(std::vector<Cell> row) {
    if (row.size() != columns_.size())
        throw std::runtime_error("table row width mismatch");
    rows_.push_back(std::move(row));
}

void Table::write_csv(const std::string& path,
                      const std::vector<std::string>& header_lines) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& h : header_lines) out << h << "\n";
    for (std::size_t c = 0; c < columns_.size(); ++c)
        out << (c ? "," : "") << columns_[c];
    out << "\n";
    for (const auto& row : rows_) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << ",";
            if (const auto* s = std::get_if<std::string>(&row[c])) {
                out << *s;
            } else if (const auto* d = std::get_if<double>(&row[c])) {
                out << format_double(*d);
            } else {
                out << std::get<long>(row[c]);
            }
        }
        out << "\n";
    }
}

int CsvData::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return static_cast<int>(i);
    }
    throw std::runtime_error("csv column not found: " + name);
}

double CsvData::number(std::size_t row, int col) const {
    return std::stod(rows.at(row).at(static_cast<std::size_t>(col)));
}

CsvData read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    CsvData data;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!have_header) {
            data.columns = std::move(cells);
            have_header = true;
        } else {
            data.rows.push_back(std::move(cells));
        }
    }
    return data;
}

}  // namespace dla::cli
