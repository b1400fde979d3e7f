#include "climagent/figures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace climagent::figures {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMargin = 60;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string colour(double t) {  // t in [0,1], blue -> white -> red
    t = std::clamp(t, 0.0, 1.0);
    int r, g, b;
    if (t < 0.5) {
        double u = t / 0.5;
        r = static_cast<int>(40 + u * 215);
        g = static_cast<int>(80 + u * 175);
        b = 255;
    } else {
        double u = (t - 0.5) / 0.5;
        r = 255;
        g = static_cast<int>(255 - u * 200);
        b = static_cast<int>(255 - u * 215);
    }
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

void header(std::ostringstream& os, const std::string& title) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
       << escape(title) << "</text>\n";
}

}  // namespace

std::string line_plot_svg(const std::vector<Line>& lines, const Axes& axes) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& l : lines) {
        for (double v : l.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
        for (double v : l.y)
            if (std::isfinite(v)) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
    }
    if (!(xmax > xmin)) xmax = xmin + 1;
    if (!(ymax > ymin)) ymax = ymin + 1;
    const double pw = kWidth - 2 * kMargin, ph = kHeight - 2 * kMargin;
    auto px = [&](double x) { return kMargin + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return kHeight - kMargin - (y - ymin) / (ymax - ymin) * ph; };

    std::ostringstream os;
    header(os, axes.title);
    os << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        double xv = xmin + (xmax - xmin) * k / 4.0, yv = ymin + (ymax - ymin) * k / 4.0;
        os << "<text x=\"" << fmt(px(xv)) << "\" y=\"" << kHeight - kMargin + 16
           << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(xv) << "</text>\n";
        os << "<text x=\"" << kMargin - 6 << "\" y=\"" << fmt(py(yv) + 4)
           << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(yv) << "</text>\n";
    }
    os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 14 << "\" text-anchor=\"middle\" font-size=\"13\">"
       << escape(axes.x_label + " (" + axes.x_units + ")") << "</text>\n";
    os << "<text x=\"16\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 16 " << kHeight / 2
       << ")\" text-anchor=\"middle\" font-size=\"13\">" << escape(axes.y_label + " (" + axes.y_units + ")")
       << "</text>\n";
    for (std::size_t k = 0; k < lines.size(); ++k) {
        const auto& l = lines[k];
        const char* c = kPalette[k % std::size(kPalette)];
        os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < l.x.size() && i < l.y.size(); ++i) {
            if (!std::isfinite(l.y[i])) continue;
            os << fmt(px(l.x[i])) << ',' << fmt(py(l.y[i])) << ' ';
        }
        os << "\"/>\n";
        os << "<text x=\"" << kWidth - kMargin + 4 << "\" y=\"" << kMargin + 14 * (k + 1)
           << "\" font-size=\"10\" fill=\"" << c << "\">" << escape(l.label) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string map_svg(const grid::Grid& g, const std::string& title) {
    double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
    for (std::size_t c = 0; c < g.cells(); ++c) {
        double v = g.data[c];
        if (g.is_fill(v) || !std::isfinite(v)) continue;
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    if (!(vmax > vmin)) vmax = vmin + 1;
    const double pw = kWidth - 2 * kMargin - 40, ph = kHeight - 2 * kMargin;
    const double cw = pw / g.nlon(), ch = ph / g.nlat();

    std::ostringstream os;
    header(os, title);
    for (std::size_t i = 0; i < g.nlat(); ++i) {
        for (std::size_t j = 0; j < g.nlon(); ++j) {
            double v = g.at(0, i, j);
            std::string fill = g.is_fill(v) ? "#cccccc" : colour((v - vmin) / (vmax - vmin));
            os << "<rect x=\"" << fmt(kMargin + j * cw) << "\" y=\""
               << fmt(kHeight - kMargin - (i + 1) * ch) << "\" width=\"" << fmt(cw) << "\" height=\""
               << fmt(ch) << "\" fill=\"" << fill << "\"/>\n";
        }
    }
    os << "<text x=\"" << kMargin + pw / 2 << "\" y=\"" << kHeight - 14
       << "\" text-anchor=\"middle\" font-size=\"13\">Longitude (degrees_east)</text>\n";
    os << "<text x=\"16\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 16 " << kHeight / 2
       << ")\" text-anchor=\"middle\" font-size=\"13\">Latitude (degrees_north)</text>\n";
    const double bx = kWidth - kMargin - 20;
    for (int k = 0; k < 10; ++k) {
        os << "<rect x=\"" << bx << "\" y=\"" << fmt(kHeight - kMargin - (k + 1) * ph / 10) << "\" width=\"14\" height=\""
           << fmt(ph / 10) << "\" fill=\"" << colour((k + 0.5) / 10) << "\"/>\n";
    }
    os << "<text x=\"" << bx << "\" y=\"" << kMargin - 6 << "\" font-size=\"10\">" << fmt(vmax) << ' '
       << escape(g.units) << "</text>\n";
    os << "<text x=\"" << bx << "\" y=\"" << kHeight - kMargin + 14 << "\" font-size=\"10\">" << fmt(vmin)
       << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

json sidecar(const std::string& figure_path, const std::string& kind, const Axes& axes,
             const std::string& variable, const std::string& units, const std::string& period) {
    return {{"figure", figure_path}, {"kind", kind},        {"title", axes.title},
            {"x_label", axes.x_label}, {"x_units", axes.x_units}, {"y_label", axes.y_label},
            {"y_units", axes.y_units}, {"variable", variable},  {"units", units},
            {"period", period}};
}

}  // namespace climagent::figures
