#pragma once

#include <string>
#include <vector>

#include "climagent/grid.hpp"

namespace climagent::figures {

struct Axes {
    std::string title;
    std::string x_label;
    std::string x_units;
    std::string y_label;
    std::string y_units;
};

struct Line {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Deterministic SVG renderings (no timestamps, fixed number formatting).
std::string line_plot_svg(const std::vector<Line>& lines, const Axes& axes);
// Renders time slice 0 of `g` as a lon/lat heatmap with a colour bar.
std::string map_svg(const grid::Grid& g, const std::string& title);

// Sidecar describing a figure, consumed by the figure validator and the
// interpretation agent.
json sidecar(const std::string& figure_path, const std::string& kind, const Axes& axes,
             const std::string& variable, const std::string& units, const std::string& period);

}  // namespace climagent::figures
