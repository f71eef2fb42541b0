#pragma once

// Minimal SVG line and step charts for quick looks at output series.

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "lcmm/text.hpp"

namespace lcmm::svg {

struct Series {
    std::string label;
    std::vector<double> x, y;
    bool step = false;
    bool dashed = false;
};

inline void write_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                        const std::string& y_label, std::ostream& os) {
    constexpr double W = 640, H = 420, ml = 60, mr = 140, mt = 30, mb = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (!(x1 > x0)) x1 = x0 + 1;
    if (!(y1 > y0)) y1 = y0 + 1;
    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };
    auto f = [](double v) { return text::fmt_fixed(v, 1); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << ml << "\" y=\"" << H - mb + 15 << "\" font-size=\"10\">" << text::fmt_sig(x0, 4) << "</text>\n";
    os << "<text x=\"" << W - mr << "\" y=\"" << H - mb + 15 << "\" font-size=\"10\" text-anchor=\"end\">"
       << text::fmt_sig(x1, 4) << "</text>\n";
    os << "<text x=\"" << ml - 4 << "\" y=\"" << H - mb << "\" font-size=\"10\" text-anchor=\"end\">"
       << text::fmt_sig(y0, 4) << "</text>\n";
    os << "<text x=\"" << ml - 4 << "\" y=\"" << mt + 8 << "\" font-size=\"10\" text-anchor=\"end\">"
       << text::fmt_sig(y1, 4) << "</text>\n";
    os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << x_label << "</text>\n";
    os << "<text x=\"14\" y=\"" << (mt + H - mb) / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 "
       << (mt + H - mb) / 2 << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* c = colors[k % 6];
        os << "<polyline fill=\"none\" stroke=\"" << c << "\"" << (s.dashed ? " stroke-dasharray=\"4 3\"" : "")
           << " points=\"";
        bool first = true;
        double prev_y = 0;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (s.step && !first) os << f(px(s.x[i])) << ',' << f(py(prev_y)) << ' ';
            os << f(px(s.x[i])) << ',' << f(py(s.y[i])) << ' ';
            prev_y = s.y[i];
            first = false;
        }
        os << "\"/>\n";
        if (!s.label.empty())
            os << "<text x=\"" << W - mr + 8 << "\" y=\"" << mt + 16 * static_cast<double>(k) + 10
               << "\" font-size=\"11\" fill=\"" << c << "\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
}

}  // namespace lcmm::svg
