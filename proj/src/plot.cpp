#include "jamlab/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace jamlab {

namespace {

constexpr int kW = 720, kH = 480;
constexpr int kMarginL = 70, kMarginR = 20, kMarginT = 40, kMarginB = 55;

struct AxisMap {
    double lo, hi;
    bool log;
    double pixel_lo, pixel_hi;

    double to_px(double v) const {
        double t;
        if (log)
            t = (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo));
        else
            t = (v - lo) / (hi - lo);
        return pixel_lo + t * (pixel_hi - pixel_lo);
    }
};

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(4);
    ss << v;
    return ss.str();
}

std::vector<double> ticks(double lo, double hi, bool log) {
    std::vector<double> t;
    if (log) {
        const int e0 = static_cast<int>(std::floor(std::log10(lo)));
        const int e1 = static_cast<int>(std::ceil(std::log10(hi)));
        for (int e = e0; e <= e1; ++e) {
            const double v = std::pow(10.0, e);
            if (v >= lo * 0.999 && v <= hi * 1.001) t.push_back(v);
        }
        if (t.size() < 2) {
            t = {lo, hi};
        }
    } else {
        const double span = hi - lo;
        const double step = std::pow(10.0, std::floor(std::log10(span / 4)));
        double s = step;
        if (span / s > 8) s *= 2;
        if (span / s > 8) s *= 2.5;
        for (double v = std::ceil(lo / s) * s; v <= hi + 1e-12 * span; v += s) t.push_back(v);
    }
    return t;
}

}  // namespace

void write_svg_plot(const std::string& path, const std::vector<Series>& series,
                    const AxesSpec& axes) {
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
    double ylo = xlo, yhi = -xlo;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (axes.logx && !(s.x[i] > 0)) continue;
            if (axes.logy && !(s.y[i] > 0)) continue;
            xlo = std::min(xlo, s.x[i]);
            xhi = std::max(xhi, s.x[i]);
            ylo = std::min(ylo, s.y[i]);
            yhi = std::max(yhi, s.y[i]);
        }
    }
    if (!(xlo <= xhi) || !(ylo <= yhi))
        throw std::invalid_argument("write_svg_plot: no plottable points");
    if (xlo == xhi) {
        xlo -= 0.5;
        xhi += 0.5;
    }
    if (ylo == yhi) {
        ylo = axes.logy ? ylo * 0.5 : ylo - 0.5;
        yhi = axes.logy ? yhi * 2.0 : yhi + 0.5;
    }
    // Pad 5% on each side (multiplicative in log space).
    if (axes.logx) {
        const double r = std::pow(xhi / xlo, 0.05);
        xlo /= r;
        xhi *= r;
    } else {
        const double pad = 0.05 * (xhi - xlo);
        xlo -= pad;
        xhi += pad;
    }
    if (axes.logy) {
        const double r = std::pow(yhi / ylo, 0.05);
        ylo /= r;
        yhi *= r;
    } else {
        const double pad = 0.05 * (yhi - ylo);
        ylo -= pad;
        yhi += pad;
    }

    const AxisMap xm{xlo, xhi, axes.logx, static_cast<double>(kMarginL),
                     static_cast<double>(kW - kMarginR)};
    const AxisMap ym{ylo, yhi, axes.logy, static_cast<double>(kH - kMarginB),
                     static_cast<double>(kMarginT)};

    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_svg_plot: cannot open " + path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    f << "<text x='" << kW / 2 << "' y='22' text-anchor='middle' font-size='15'>" << axes.title
      << "</text>\n";

    for (double tx : ticks(xlo, xhi, axes.logx)) {
        const double px = xm.to_px(tx);
        f << "<line x1='" << px << "' y1='" << kMarginT << "' x2='" << px << "' y2='"
          << kH - kMarginB << "' stroke='#dddddd'/>\n";
        f << "<text x='" << px << "' y='" << kH - kMarginB + 18
          << "' text-anchor='middle' font-size='11'>" << fmt(tx) << "</text>\n";
    }
    for (double ty : ticks(ylo, yhi, axes.logy)) {
        const double py = ym.to_px(ty);
        f << "<line x1='" << kMarginL << "' y1='" << py << "' x2='" << kW - kMarginR << "' y2='"
          << py << "' stroke='#dddddd'/>\n";
        f << "<text x='" << kMarginL - 6 << "' y='" << py + 4
          << "' text-anchor='end' font-size='11'>" << fmt(ty) << "</text>\n";
    }
    f << "<rect x='" << kMarginL << "' y='" << kMarginT << "' width='" << kW - kMarginL - kMarginR
      << "' height='" << kH - kMarginT - kMarginB << "' fill='none' stroke='#333333'/>\n";
    f << "<text x='" << kW / 2 << "' y='" << kH - 12 << "' text-anchor='middle' font-size='13'>"
      << axes.xlabel << "</text>\n";
    f << "<text x='16' y='" << kH / 2 << "' text-anchor='middle' font-size='13' transform='rotate(-90 16 "
      << kH / 2 << ")'>" << axes.ylabel << "</text>\n";

    int legend_y = kMarginT + 14;
    for (const auto& s : series) {
        std::ostringstream pts;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (axes.logx && !(s.x[i] > 0)) continue;
            if (axes.logy && !(s.y[i] > 0)) continue;
            pts << xm.to_px(s.x[i]) << "," << ym.to_px(s.y[i]) << " ";
        }
        if (s.line)
            f << "<polyline points='" << pts.str() << "' fill='none' stroke='" << s.color
              << "' stroke-width='1.6'/>\n";
        if (s.markers) {
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (axes.logx && !(s.x[i] > 0)) continue;
                if (axes.logy && !(s.y[i] > 0)) continue;
                f << "<circle cx='" << xm.to_px(s.x[i]) << "' cy='" << ym.to_px(s.y[i])
                  << "' r='3' fill='" << s.color << "'/>\n";
            }
        }
        if (!s.label.empty()) {
            f << "<rect x='" << kW - kMarginR - 150 << "' y='" << legend_y - 9
              << "' width='10' height='10' fill='" << s.color << "'/>\n";
            f << "<text x='" << kW - kMarginR - 136 << "' y='" << legend_y
              << "' font-size='12'>" << s.label << "</text>\n";
            legend_y += 16;
        }
    }
    f << "</svg>\n";
}

void write_svg_heatmap(const std::string& path, const std::vector<double>& values, int rows,
                       int cols, const std::vector<std::string>& row_labels,
                       const std::vector<std::string>& col_labels, const AxesSpec& axes) {
    if (rows < 1 || cols < 1 || values.size() != static_cast<std::size_t>(rows) * cols)
        throw std::invalid_argument("write_svg_heatmap: shape mismatch");
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) hi = lo + 1;

    const double cw = static_cast<double>(kW - kMarginL - kMarginR) / cols;
    const double ch = static_cast<double>(kH - kMarginT - kMarginB) / rows;

    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_svg_heatmap: cannot open " + path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    f << "<text x='" << kW / 2 << "' y='22' text-anchor='middle' font-size='15'>" << axes.title
      << "</text>\n";
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            const double t = (values[static_cast<std::size_t>(i) * cols + j] - lo) / (hi - lo);
            // Blue (low) to red (high) through white.
            const int r = static_cast<int>(255 * std::min(1.0, 2 * t));
            const int b = static_cast<int>(255 * std::min(1.0, 2 * (1 - t)));
            const int g = static_cast<int>(255 * (1 - std::abs(2 * t - 1)) * 0.85 +
                                           std::min(255.0 * std::min(2 * t, 2 * (1 - t)), 255.0) * 0.15);
            const double x = kMarginL + j * cw;
            const double y = kH - kMarginB - (i + 1) * ch;  // row 0 at the bottom
            f << "<rect x='" << x << "' y='" << y << "' width='" << cw + 0.5 << "' height='"
              << ch + 0.5 << "' fill='rgb(" << r << "," << g << "," << b << ")'/>\n";
        }
    }
    for (int j = 0; j < cols && j < static_cast<int>(col_labels.size()); ++j)
        f << "<text x='" << kMarginL + (j + 0.5) * cw << "' y='" << kH - kMarginB + 16
          << "' text-anchor='middle' font-size='10'>" << col_labels[static_cast<std::size_t>(j)]
          << "</text>\n";
    for (int i = 0; i < rows && i < static_cast<int>(row_labels.size()); ++i)
        f << "<text x='" << kMarginL - 6 << "' y='" << kH - kMarginB - (i + 0.5) * ch + 4
          << "' text-anchor='end' font-size='10'>" << row_labels[static_cast<std::size_t>(i)]
          << "</text>\n";
    f << "<text x='" << kW / 2 << "' y='" << kH - 12 << "' text-anchor='middle' font-size='13'>"
      << axes.xlabel << "</text>\n";
    f << "<text x='16' y='" << kH / 2 << "' text-anchor='middle' font-size='13' transform='rotate(-90 16 "
      << kH / 2 << ")'>" << axes.ylabel << "</text>\n";
    f << "</svg>\n";
}

}  // namespace jamlab
