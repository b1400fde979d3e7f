#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "climagent/util.hpp"

namespace climagent::grid {

// Gridded field in [time][lat][lon] row-major order. Time coordinates are
// decimal years at interval midpoints (1985.0417 is January 1985).
struct Grid {
    std::string variable;
    std::string units;
    std::string frequency;  // "monthly" | "annual"
    std::vector<double> time;
    std::vector<double> lat;
    std::vector<double> lon;
    double fill_value = 1.0e20;
    std::vector<double> data;

    std::size_t nt() const { return time.size(); }
    std::size_t nlat() const { return lat.size(); }
    std::size_t nlon() const { return lon.size(); }
    std::size_t cells() const { return lat.size() * lon.size(); }

    double& at(std::size_t t, std::size_t i, std::size_t j) {
        return data[(t * lat.size() + i) * lon.size() + j];
    }
    double at(std::size_t t, std::size_t i, std::size_t j) const {
        return data[(t * lat.size() + i) * lon.size() + j];
    }
    bool is_fill(double v) const { return v == fill_value; }
};

// A one-dimensional time series file: {"kind":"series", ...}.
struct Series {
    std::string variable;
    std::string units;
    std::string label;
    std::vector<double> time;
    std::vector<double> values;
};

// Throws Error(invariant_violation) on size/coordinate/unit problems.
void validate(const Grid& g);

json to_json(const Grid& g);
Grid grid_from_json(const json& j);
Grid read_grid(const fs::path& path);
void write_grid(const fs::path& path, const Grid& g);

json to_json(const Series& s);
Series series_from_json(const json& j);
Series read_series(const fs::path& path);
void write_series(const fs::path& path, const Series& s);

int year_of(double decimal_year);

}  // namespace climagent::grid
