#pragma once

#include <string>
#include <variant>
#include <vector>

namespace dla::cli {

/// CSV with deterministic formatting: doubles print as shortest %.17g so
/// identical runs reproduce identical bytes. Header comment lines ("# ...")
/// carry the run manifest.
class Table {
  public:
    using Cell = std::variant<std::string, double, long>;

    explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add_row(std::vector<Cell> row);
    void write_csv(const std::string& path, const std::vector<std::string>& header_lines) const;

    static std::string format_double(double v);

    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::vector<Cell>>& rows() const { return rows_; }

  private:
    std::vector<std::string> columns_;
    std::vector<std::vector<Cell>> rows_;
};

/// Reads a CSV produced by Table (skips "#" comment lines). Cells stay
/// strings; numeric parsing is the caller's business.
struct CsvData {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int column_index(const std::string& name) const;
    double number(std::size_t row, int col) const;
};

CsvData read_csv(const std::string& path);

}  // namespace dla::cli
