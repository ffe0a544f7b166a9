#pragma once

// Minimal SVG charts for reports: line plots and grouped bar charts.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace hgsp::plot {

struct Series {
    std::string name;
    std::vector<double> x;  // ignored by bar charts
    std::vector<double> y;
};

namespace detail {

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
inline constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 150, kTop = 40, kBottom = 60;

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Axis {
    double lo = 0, hi = 1;
    double map(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

inline Axis padded(double lo, double hi) {
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

inline std::string text(double x, double y, const std::string& s, const char* anchor = "middle", int size = 12,
                        double rotate = 0) {
    std::string t = "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + std::to_string(size) +
                    "\" text-anchor=\"" + anchor + "\" font-family=\"sans-serif\"";
    if (rotate != 0) t += " transform=\"rotate(" + num(rotate) + " " + num(x) + " " + num(y) + ")\"";
    return t + ">" + escape(s) + "</text>\n";
}

inline std::string frame(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                         const Axis& y) {
    const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) +
                    "\" viewBox=\"0 0 " + num(kW) + " " + num(kH) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += text(kW / 2, 24, title, "middle", 15);
    s += text((x0 + x1) / 2, kH - 15, xlabel);
    s += text(18, (y0 + y1) / 2, ylabel, "middle", 12, -90);
    for (int i = 0; i <= 5; ++i) {
        const double v = y.lo + (y.hi - y.lo) * i / 5.0;
        const double py = y.map(v, y0, y1);
        s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(py) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(py) +
             "\" stroke=\"#e0e0e0\"/>\n";
        s += text(x0 - 6, py + 4, num(v), "end", 11);
    }
    s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y0) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y1) +
         "\" stroke=\"black\"/>\n";
    return s;
}

inline std::string legend(const std::vector<Series>& series) {
    std::string s;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double y = kTop + 10 + 20.0 * static_cast<double>(i);
        s += "<rect x=\"" + num(kW - kRight + 15) + "\" y=\"" + num(y - 9) + "\" width=\"12\" height=\"12\" fill=\"" +
             kPalette[i % 6] + "\"/>\n";
        s += text(kW - kRight + 32, y + 1, series[i].name, "start", 12);
    }
    return s;
}

}  // namespace detail

inline std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<Series>& series) {
    using namespace detail;
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& s : series)
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    const Axis xa = padded(xmin, xmax), ya = padded(ymin, ymax);
    const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
    std::string out = frame(title, xlabel, ylabel, ya);
    for (int i = 0; i <= 5; ++i) {
        const double v = xa.lo + (xa.hi - xa.lo) * i / 5.0;
        out += text(xa.map(v, x0, x1), y0 + 18, num(v), "middle", 11);
    }
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* colour = kPalette[k % 6];
        std::string pts;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            const double px = xa.map(s.x[i], x0, x1), py = ya.map(s.y[i], y0, y1);
            pts += num(px) + "," + num(py) + " ";
            out += "<circle cx=\"" + num(px) + "\" cy=\"" + num(py) + "\" r=\"3.5\" fill=\"" + colour + "\"/>\n";
        }
        out += "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" + std::string(colour) + "\" points=\"" + pts +
               "\"/>\n";
    }
    return out + legend(series) + "</svg>\n";
}

/// Grouped bars: one group per category, one bar per series.
inline std::string bar_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                             const std::vector<std::string>& categories, const std::vector<Series>& series) {
    using namespace detail;
    double ymax = 0;
    for (const auto& s : series)
        for (double v : s.y) ymax = std::max(ymax, v);
    const Axis ya{0, ymax > 0 ? ymax * 1.1 : 1};
    const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
    std::string out = frame(title, xlabel, ylabel, ya);
    const double group = (x1 - x0) / static_cast<double>(std::max<std::size_t>(categories.size(), 1));
    const double bar = 0.8 * group / static_cast<double>(std::max<std::size_t>(series.size(), 1));
    for (std::size_t c = 0; c < categories.size(); ++c) {
        const double gx = x0 + group * static_cast<double>(c) + 0.1 * group;
        for (std::size_t k = 0; k < series.size(); ++k) {
            if (c >= series[k].y.size()) continue;
            const double top = ya.map(series[k].y[c], y0, y1);
            out += "<rect x=\"" + num(gx + bar * static_cast<double>(k)) + "\" y=\"" + num(top) + "\" width=\"" +
                   num(bar) + "\" height=\"" + num(y0 - top) + "\" fill=\"" + kPalette[k % 6] + "\"/>\n";
        }
        out += text(x0 + group * (static_cast<double>(c) + 0.5), y0 + 18, categories[c], "middle", 11);
    }
    return out + legend(series) + "</svg>\n";
}

}  // namespace hgsp::plot
