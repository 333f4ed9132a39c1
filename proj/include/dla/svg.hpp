#pragma once

#include <string>
#include <vector>

namespace dla::cli {

// Minimal SVG emitters. Each plot function reads a CSV this tool previously
// wrote, so the rendered artifact always reflects on-disk data.

/// Vertical bars from (label, value) columns; a horizontal rule at y=1 marks
/// the baseline ratio.
void svg_bar_chart(const std::string& csv_path, const std::string& label_col,
                   const std::string& value_col, const std::string& title,
                   const std::string& out_path);

/// One polyline per series column, x from the given column.
void svg_line_plot(const std::string& csv_path, const std::string& x_col,
                   const std::vector<std::string>& series_cols, const std::string& title,
                   const std::string& out_path);

/// Grayscale raster from a CSV grid of row,col,value triplets.
void svg_heat_raster(const std::string& csv_path, const std::string& row_col,
                     const std::string& col_col, const std::string& value_col,
                     const std::string& title, const std::string& out_path);

}  // namespace dla::cli
