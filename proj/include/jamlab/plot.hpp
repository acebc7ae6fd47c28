#pragma once

#include <string>
#include <vector>

namespace jamlab {

/// Minimal SVG renderers for quick-look plots. Not a plotting library: fixed
/// layout, one series style per call site, enough to eyeball a power law or
/// a phase boundary without leaving the terminal environment.

struct Series {
    std::vector<double> x, y;
    std::string label;
    std::string color = "#1f6feb";
    bool line = true;
    bool markers = true;
};

struct AxesSpec {
    std::string title, xlabel, ylabel;
    bool logx = false, logy = false;
};

void write_svg_plot(const std::string& path, const std::vector<Series>& series,
                    const AxesSpec& axes);

/// Heatmap of a row-major grid; cell (i, j) = values[i * cols + j], rows run
/// bottom-up (row 0 drawn at the bottom). Tick labels are given per row/col.
void write_svg_heatmap(const std::string& path, const std::vector<double>& values, int rows,
                       int cols, const std::vector<std::string>& row_labels,
                       const std::vector<std::string>& col_labels, const AxesSpec& axes);

}  // namespace jamlab
