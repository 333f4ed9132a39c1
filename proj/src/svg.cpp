#include "dla/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "dla/table.hpp"

namespace dla::cli {

namespace {

constexpr int kW = 640, kH = 400;
constexpr int kPad = 56;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

const char* kSeriesColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                               "#9467bd", "#8c564b"};

void open_svg(std::ofstream& out, const std::string& title) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
        << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
    out << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\">"
        << title << "</text>\n";
}

}  // namespace

void svg_bar_chart(const std::string& csv_path, const std::string& label_col,
                   const std::string& value_col, const std::string& title,
                   const std::string& out_path) {
    const CsvData data = read_csv(csv_path);
    const int lc = data.column_index(label_col);
    const int vc = data.column_index(value_col);
    double vmax = 0.0;
    for (std::size_t r = 0; r < data.rows.size(); ++r)
        vmax = std::max(vmax, data.number(r, vc));
    if (vmax <= 0.0) vmax = 1.0;
    vmax *= 1.15;

    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    open_svg(out, title);
    const int n = static_cast<int>(data.rows.size());
    const double plot_w = kW - 2 * kPad, plot_h = kH - 2 * kPad;
    const double slot = plot_w / std::max(n, 1);
    for (int r = 0; r < n; ++r) {
        const double v = data.number(static_cast<std::size_t>(r), vc);
        const double bar_h = v / vmax * plot_h;
        const double x = kPad + r * slot + slot * 0.15;
        const double y = kH - kPad - bar_h;
        out << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(slot * 0.7)
            << "\" height=\"" << num(bar_h) << "\" fill=\"#4878a8\"/>\n";
        out << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << num(y - 6)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
            << Table::format_double(v) << "</text>\n";
        out << "<text x=\"" << num(x + slot * 0.35) << "\" y=\"" << kH - kPad + 16
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << data.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(lc)]
            << "</text>\n";
    }
    // baseline ratio marker
    const double y1 = kH - kPad - 1.0 / vmax * plot_h;
    out << "<line x1=\"" << kPad << "\" y1=\"" << num(y1) << "\" x2=\"" << kW - kPad << "\" y2=\""
        << num(y1) << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
    out << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad
        << "\" y2=\"" << kH - kPad << "\" stroke=\"black\"/>\n";
    out << "</svg>\n";
}

void svg_line_plot(const std::string& csv_path, const std::string& x_col,
                   const std::vector<std::string>& series_cols, const std::string& title,
                   const std::string& out_path) {
    const CsvData data = read_csv(csv_path);
    const int xc = data.column_index(x_col);
    std::vector<int> scs;
    for (const auto& s : series_cols) scs.push_back(data.column_index(s));
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (std::size_t r = 0; r < data.rows.size(); ++r) {
        xmin = std::min(xmin, data.number(r, xc));
        xmax = std::max(xmax, data.number(r, xc));
        for (int sc : scs) {
            ymin = std::min(ymin, data.number(r, sc));
            ymax = std::max(ymax, data.number(r, sc));
        }
    }
    if (data.rows.empty()) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double yspan = ymax - ymin;
    ymax += 0.05 * yspan;
    ymin -= 0.05 * yspan;

    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    open_svg(out, title);
    const double plot_w = kW - 2 * kPad, plot_h = kH - 2 * kPad;
    auto px = [&](double x) { return kPad + (x - xmin) / (xmax - xmin) * plot_w; };
    auto py = [&](double y) { return kH - kPad - (y - ymin) / (ymax - ymin) * plot_h; };
    for (std::size_t s = 0; s < scs.size(); ++s) {
        out << "<polyline fill=\"none\" stroke=\"" << kSeriesColors[s % 6]
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t r = 0; r < data.rows.size(); ++r)
            out << num(px(data.number(r, xc))) << "," << num(py(data.number(r, scs[s]))) << " ";
        out << "\"/>\n";
        out << "<text x=\"" << kW - kPad + 2 << "\" y=\"" << num(py(data.number(
                   data.rows.size() - 1, scs[s]))) << "\" font-family=\"sans-serif\" "
            << "font-size=\"11\" fill=\"" << kSeriesColors[s % 6] << "\">" << series_cols[s]
            << "</text>\n";
    }
    out << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad
        << "\" y2=\"" << kH - kPad << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\""
        << kH - kPad << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << kPad - 6 << "\" y=\"" << kH - kPad
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << Table::format_double(ymin) << "</text>\n";
    out << "<text x=\"" << kPad - 6 << "\" y=\"" << kPad + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << Table::format_double(ymax) << "</text>\n";
    out << "</svg>\n";
}

void svg_heat_raster(const std::string& csv_path, const std::string& row_col,
                     const std::string& col_col, const std::string& value_col,
                     const std::string& title, const std::string& out_path) {
    const CsvData data = read_csv(csv_path);
    const int rc = data.column_index(row_col);
    const int cc = data.column_index(col_col);
    const int vc = data.column_index(value_col);
    int rows = 0, cols = 0;
    double vmin = 1e300, vmax = -1e300;
    std::map<std::pair<int, int>, double> cells;
    for (std::size_t r = 0; r < data.rows.size(); ++r) {
        const int ri = static_cast<int>(data.number(r, rc));
        const int ci = static_cast<int>(data.number(r, cc));
        const double v = data.number(r, vc);
        cells[{ri, ci}] = v;
        rows = std::max(rows, ri + 1);
        cols = std::max(cols, ci + 1);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    if (cells.empty() || vmax == vmin) vmax = vmin + 1;

    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    open_svg(out, title);
    const double plot = std::min(kW, kH) - 2.0 * kPad;
    const double cell = plot / std::max(rows, cols);
    for (const auto& [rcpair, v] : cells) {
        const int shade = static_cast<int>(std::lround((v - vmin) / (vmax - vmin) * 255.0));
        char color[8];
        std::snprintf(color, sizeof(color), "#%02x%02x%02x", shade, shade, shade);
        out << "<rect x=\"" << num(kPad + rcpair.second * cell) << "\" y=\""
            << num(kPad + rcpair.first * cell) << "\" width=\"" << num(cell) << "\" height=\""
            << num(cell) << "\" fill=\"" << color << "\"/>\n";
    }
    out << "</svg>\n";
}

}  // namespace dla::cli
