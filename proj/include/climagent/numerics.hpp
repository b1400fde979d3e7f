#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "climagent/grid.hpp"

// Reference diagnostics on Grid-JSON data. Area weighting is proportional to
// cos(latitude); fill values are excluded from every reduction.
namespace climagent::numerics {

using grid::Grid;
using grid::Series;

struct YearRange {
    int start = 0;
    int end = 0;  // inclusive

    bool contains(int year) const { return year >= start && year <= end; }
};

std::vector<double> area_weights(std::span<const double> lat_degrees);

// Area-weighted mean of time slice t.
double area_weighted_mean(const Grid& g, std::size_t t);
Series global_mean_series(const Grid& g);

// Throws period_out_of_range unless [period.start, period.end] lies inside the
// grid's year coverage.
void require_period(const Grid& g, YearRange period);

struct Climatology {
    Grid map;  // one time step at the period midpoint
    double global_mean = 0.0;
};
Climatology climatology_mean(const Grid& g, YearRange period);

Grid time_mean(const Grid& g, YearRange period);
Grid time_variance(const Grid& g, YearRange period);
// Per-cell departure from the per-cell baseline mean.
Grid anomaly_field(const Grid& g, YearRange baseline);
// Area-weighted series minus its own mean over the baseline years.
Series anomaly_series(const Grid& g, YearRange baseline);

// Mean per calendar year of a sub-annual series.
Series annual_means(const Series& s);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
};
// Ordinary least squares y = slope * x + intercept. Needs >= 2 points with
// distinct x, else degenerate_input.
LinearFit linear_trend(std::span<const double> x, std::span<const double> y);

struct GregoryResult {
    double forcing = 0.0;   // F, W m-2: intercept of N on dT
    double feedback = 0.0;  // lambda, W m-2 K-1: slope
    std::optional<double> ecs2x;  // -F / (2 lambda), absent when lambda >= 0
    bool non_negative_lambda = false;
};
// Regresses net TOA flux on temperature change: N = F + lambda * dT.
GregoryResult gregory_regression(std::span<const double> delta_t, std::span<const double> net_flux);

Grid subset_time(const Grid& g, YearRange years);
Grid subset_region(const Grid& g, double lat_min, double lat_max, double lon_min, double lon_max);
// Bilinear interpolation onto a regular nlat x nlon cell-centred global grid.
Grid regrid_bilinear(const Grid& g, std::size_t nlat, std::size_t nlon);

struct UnitConversion {
    std::string from;
    std::string to;
    double scale = 1.0;
    double offset = 0.0;  // applied after scale
};
// Fixed conversion table; unknown pairs raise unknown_unit_conversion.
UnitConversion find_conversion(const std::string& from, const std::string& to);
const std::vector<UnitConversion>& conversion_table();
Grid convert_units(const Grid& g, const UnitConversion& conv);

struct SyntheticSpec {
    std::string variable = "tas";
    std::string units = "K";
    std::string frequency = "monthly";
    std::size_t nlat = 18;
    std::size_t nlon = 24;
    int start_year = 1985;
    int end_year = 2014;
    double base = 287.0;
    double meridional_amplitude = 0.0;  // adds amp * (cos(lat) - 2/pi)
    double zonal_amplitude = 0.0;       // adds amp * cos(lon)
    double seasonal_amplitude = 0.0;    // hemispherically signed sin cycle
    double trend_per_year = 0.0;
    int step_year = 0;                  // 0 disables
    double step_amplitude = 0.0;
    double noise_sd = 0.0;
    std::uint64_t seed = 0;

    static SyntheticSpec from_json(const json& j);
    json to_json() const;
};
// Same spec and seed give the same grid on every platform (own PRNG and Box-Muller).
Grid generate_synthetic(const SyntheticSpec& spec);

}  // namespace climagent::numerics
