#include "climagent/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "climagent/error.hpp"

namespace climagent::numerics {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Grid with_shape_of(const Grid& g, std::vector<double> time) {
    Grid out;
    out.variable = g.variable;
    out.units = g.units;
    out.frequency = g.frequency;
    out.time = std::move(time);
    out.lat = g.lat;
    out.lon = g.lon;
    out.fill_value = g.fill_value;
    out.data.assign(out.nt() * out.cells(), 0.0);
    return out;
}

std::vector<std::size_t> steps_in(const Grid& g, YearRange period) {
    std::vector<std::size_t> idx;
    for (std::size_t t = 0; t < g.nt(); ++t)
        if (period.contains(grid::year_of(g.time[t]))) idx.push_back(t);
    return idx;
}

double period_midpoint(YearRange p) { return (p.start + p.end + 1) / 2.0; }

// Per-cell mean over the listed time steps; cells with no valid value get fill.
std::vector<double> cell_means(const Grid& g, const std::vector<std::size_t>& steps) {
    std::vector<double> mean(g.cells(), 0.0);
    std::vector<std::size_t> count(g.cells(), 0);
    for (auto t : steps) {
        for (std::size_t c = 0; c < g.cells(); ++c) {
            double v = g.data[t * g.cells() + c];
            if (g.is_fill(v)) continue;
            mean[c] += v;
            ++count[c];
        }
    }
    for (std::size_t c = 0; c < g.cells(); ++c)
        mean[c] = count[c] ? mean[c] / static_cast<double>(count[c]) : g.fill_value;
    return mean;
}

// splitmix64: small, portable, and fully specified.
struct SplitMix64 {
    std::uint64_t state;
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() {  // (0, 1)
        return (static_cast<double>(next() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }
    double normal() {
        double u1 = uniform(), u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
};

}  // namespace

std::vector<double> area_weights(std::span<const double> lat_degrees) {
    std::vector<double> w(lat_degrees.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::cos(lat_degrees[i] * kDeg);
    return w;
}

double area_weighted_mean(const Grid& g, std::size_t t) {
    auto w = area_weights(g.lat);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < g.nlat(); ++i) {
        for (std::size_t j = 0; j < g.nlon(); ++j) {
            double v = g.at(t, i, j);
            if (g.is_fill(v)) continue;
            num += w[i] * v;
            den += w[i];
        }
    }
    if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return num / den;
}

Series global_mean_series(const Grid& g) {
    Series s;
    s.variable = g.variable;
    s.units = g.units;
    s.time = g.time;
    s.values.resize(g.nt());
    for (std::size_t t = 0; t < g.nt(); ++t) s.values[t] = area_weighted_mean(g, t);
    return s;
}

void require_period(const Grid& g, YearRange period) {
    if (period.start > period.end)
        fail(Errc::period_out_of_range, "period start after end");
    int first = grid::year_of(g.time.front());
    int last = grid::year_of(g.time.back());
    if (period.start < first || period.end > last)
        fail(Errc::period_out_of_range,
             std::to_string(period.start) + "-" + std::to_string(period.end) +
                 " outside data coverage " + std::to_string(first) + "-" + std::to_string(last));
}

Grid time_mean(const Grid& g, YearRange period) {
    require_period(g, period);
    auto out = with_shape_of(g, {period_midpoint(period)});
    out.data = cell_means(g, steps_in(g, period));
    return out;
}

Climatology climatology_mean(const Grid& g, YearRange period) {
    Climatology c;
    c.map = time_mean(g, period);
    c.global_mean = area_weighted_mean(c.map, 0);
    return c;
}

Grid time_variance(const Grid& g, YearRange period) {
    require_period(g, period);
    auto steps = steps_in(g, period);
    auto mean = cell_means(g, steps);
    auto out = with_shape_of(g, {period_midpoint(period)});
    out.units = "(" + g.units + ")2";
    for (std::size_t c = 0; c < g.cells(); ++c) {
        if (g.is_fill(mean[c])) {
            out.data[c] = g.fill_value;
            continue;
        }
        double ss = 0.0;
        std::size_t n = 0;
        for (auto t : steps) {
            double v = g.data[t * g.cells() + c];
            if (g.is_fill(v)) continue;
            ss += (v - mean[c]) * (v - mean[c]);
            ++n;
        }
        out.data[c] = ss / static_cast<double>(n);
    }
    return out;
}

Grid anomaly_field(const Grid& g, YearRange baseline) {
    require_period(g, baseline);
    auto mean = cell_means(g, steps_in(g, baseline));
    auto out = with_shape_of(g, g.time);
    for (std::size_t t = 0; t < g.nt(); ++t) {
        for (std::size_t c = 0; c < g.cells(); ++c) {
            double v = g.data[t * g.cells() + c];
            out.data[t * g.cells() + c] =
                (g.is_fill(v) || g.is_fill(mean[c])) ? g.fill_value : v - mean[c];
        }
    }
    return out;
}

Series anomaly_series(const Grid& g, YearRange baseline) {
    require_period(g, baseline);
    auto s = global_mean_series(g);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < s.time.size(); ++t) {
        if (!baseline.contains(grid::year_of(s.time[t]))) continue;
        sum += s.values[t];
        ++n;
    }
    double base = sum / static_cast<double>(n);
    for (double& v : s.values) v -= base;
    s.label = "anomaly";
    return s;
}

Series annual_means(const Series& s) {
    std::map<int, std::pair<double, std::size_t>> acc;
    for (std::size_t t = 0; t < s.time.size(); ++t) {
        auto& [sum, n] = acc[grid::year_of(s.time[t])];
        sum += s.values[t];
        ++n;
    }
    Series out;
    out.variable = s.variable;
    out.units = s.units;
    out.label = s.label;
    for (const auto& [year, sn] : acc) {
        out.time.push_back(year + 0.5);
        out.values.push_back(sn.first / static_cast<double>(sn.second));
    }
    return out;
}

LinearFit linear_trend(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(Errc::degenerate_input, "x/y length mismatch");
    if (x.size() < 2) fail(Errc::degenerate_input, "need at least two points");
    const double n = static_cast<double>(x.size());
    double xm = 0.0, ym = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xm += x[i];
        ym += y[i];
    }
    xm /= n;
    ym /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - xm) * (x[i] - xm);
        sxy += (x[i] - xm) * (y[i] - ym);
    }
    if (sxx == 0.0) fail(Errc::degenerate_input, "all x values are identical");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = ym - fit.slope * xm;
    return fit;
}

GregoryResult gregory_regression(std::span<const double> delta_t, std::span<const double> net_flux) {
    auto fit = linear_trend(delta_t, net_flux);
    GregoryResult r;
    r.forcing = fit.intercept;
    r.feedback = fit.slope;
    if (fit.slope >= 0.0) {
        r.non_negative_lambda = true;
    } else {
        r.ecs2x = -r.forcing / (2.0 * r.feedback);
    }
    return r;
}

Grid subset_time(const Grid& g, YearRange years) {
    require_period(g, years);
    auto steps = steps_in(g, years);
    std::vector<double> time;
    for (auto t : steps) time.push_back(g.time[t]);
    auto out = with_shape_of(g, std::move(time));
    for (std::size_t k = 0; k < steps.size(); ++k)
        std::copy_n(g.data.begin() + static_cast<std::ptrdiff_t>(steps[k] * g.cells()), g.cells(),
                    out.data.begin() + static_cast<std::ptrdiff_t>(k * g.cells()));
    return out;
}

Grid subset_region(const Grid& g, double lat_min, double lat_max, double lon_min, double lon_max) {
    if (lat_min > lat_max) fail(Errc::invalid_argument, "lat_min > lat_max");
    std::vector<std::size_t> is, js;
    for (std::size_t i = 0; i < g.nlat(); ++i)
        if (g.lat[i] >= lat_min && g.lat[i] <= lat_max) is.push_back(i);
    for (std::size_t j = 0; j < g.nlon(); ++j) {
        double x = g.lon[j];
        bool inside = lon_min <= lon_max ? (x >= lon_min && x <= lon_max)
                                         : (x >= lon_min || x <= lon_max);
        if (inside) js.push_back(j);
    }
    if (is.empty() || js.empty()) fail(Errc::invalid_argument, "region selects no grid cells");
    Grid out;
    out.variable = g.variable;
    out.units = g.units;
    out.frequency = g.frequency;
    out.time = g.time;
    out.fill_value = g.fill_value;
    for (auto i : is) out.lat.push_back(g.lat[i]);
    for (auto j : js) out.lon.push_back(g.lon[j]);
    out.data.reserve(out.nt() * out.cells());
    for (std::size_t t = 0; t < g.nt(); ++t)
        for (auto i : is)
            for (auto j : js) out.data.push_back(g.at(t, i, j));
    return out;
}

Grid regrid_bilinear(const Grid& g, std::size_t nlat, std::size_t nlon) {
    if (nlat == 0 || nlon == 0) fail(Errc::invalid_argument, "regrid target has zero size");
    Grid out;
    out.variable = g.variable;
    out.units = g.units;
    out.frequency = g.frequency;
    out.time = g.time;
    out.fill_value = g.fill_value;
    for (std::size_t i = 0; i < nlat; ++i) out.lat.push_back(-90.0 + (i + 0.5) * 180.0 / nlat);
    for (std::size_t j = 0; j < nlon; ++j) out.lon.push_back((j + 0.5) * 360.0 / nlon);
    out.data.assign(out.nt() * out.cells(), 0.0);

    struct Bracket {
        std::size_t lo, hi;
        double w;  // weight of hi
    };
    auto lat_bracket = [&](double y) -> Bracket {
        if (g.nlat() == 1 || y <= g.lat.front()) return {0, 0, 0.0};
        if (y >= g.lat.back()) return {g.nlat() - 1, g.nlat() - 1, 0.0};
        auto hi = static_cast<std::size_t>(std::upper_bound(g.lat.begin(), g.lat.end(), y) - g.lat.begin());
        auto lo = hi - 1;
        return {lo, hi, (y - g.lat[lo]) / (g.lat[hi] - g.lat[lo])};
    };
    auto lon_bracket = [&](double x) -> Bracket {
        const std::size_t n = g.nlon();
        if (n == 1) return {0, 0, 0.0};
        double base = g.lon.front();
        double xr = std::fmod(x - base, 360.0);
        if (xr < 0) xr += 360.0;
        xr += base;
        auto hi = static_cast<std::size_t>(std::upper_bound(g.lon.begin(), g.lon.end(), xr) - g.lon.begin());
        if (hi == n) {  // wrap between last and first
            double span = g.lon.front() + 360.0 - g.lon.back();
            return {n - 1, 0, (xr - g.lon.back()) / span};
        }
        auto lo = hi - 1;
        return {lo, hi, (xr - g.lon[lo]) / (g.lon[hi] - g.lon[lo])};
    };

    std::vector<Bracket> lb, ob;
    for (double y : out.lat) lb.push_back(lat_bracket(y));
    for (double x : out.lon) ob.push_back(lon_bracket(x));
    for (std::size_t t = 0; t < g.nt(); ++t) {
        for (std::size_t i = 0; i < nlat; ++i) {
            for (std::size_t j = 0; j < nlon; ++j) {
                const auto& a = lb[i];
                const auto& b = ob[j];
                double v00 = g.at(t, a.lo, b.lo), v01 = g.at(t, a.lo, b.hi);
                double v10 = g.at(t, a.hi, b.lo), v11 = g.at(t, a.hi, b.hi);
                double& dst = out.at(t, i, j);
                if (g.is_fill(v00) || g.is_fill(v01) || g.is_fill(v10) || g.is_fill(v11)) {
                    dst = g.fill_value;
                    continue;
                }
                double lo = v00 * (1 - b.w) + v01 * b.w;
                double hi = v10 * (1 - b.w) + v11 * b.w;
                dst = lo * (1 - a.w) + hi * a.w;
            }
        }
    }
    return out;
}

const std::vector<UnitConversion>& conversion_table() {
    static const std::vector<UnitConversion> table = {
        {"K", "degC", 1.0, -273.15},
        {"degC", "K", 1.0, 273.15},
        {"kg m-2 s-1", "mm day-1", 86400.0, 0.0},
        {"mm day-1", "kg m-2 s-1", 1.0 / 86400.0, 0.0},
        {"Pa", "hPa", 0.01, 0.0},
        {"hPa", "Pa", 100.0, 0.0},
        {"1", "%", 100.0, 0.0},
        {"%", "1", 0.01, 0.0},
    };
    return table;
}

UnitConversion find_conversion(const std::string& from, const std::string& to) {
    if (from == to) return {from, to, 1.0, 0.0};
    for (const auto& c : conversion_table())
        if (c.from == from && c.to == to) return c;
    fail(Errc::unknown_unit_conversion, "no conversion from '" + from + "' to '" + to + "'");
}

Grid convert_units(const Grid& g, const UnitConversion& conv) {
    if (g.units != conv.from)
        fail(Errc::unknown_unit_conversion,
             "grid units '" + g.units + "' do not match conversion source '" + conv.from + "'");
    Grid out = g;
    out.units = conv.to;
    for (double& v : out.data)
        if (!g.is_fill(v)) v = v * conv.scale + conv.offset;
    return out;
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
    SyntheticSpec s;
    s.variable = j.value("variable", s.variable);
    s.units = j.value("units", s.units);
    s.frequency = j.value("frequency", s.frequency);
    s.nlat = j.value("nlat", s.nlat);
    s.nlon = j.value("nlon", s.nlon);
    s.start_year = j.value("start_year", s.start_year);
    s.end_year = j.value("end_year", s.end_year);
    s.base = j.value("base", s.base);
    s.meridional_amplitude = j.value("meridional_amplitude", s.meridional_amplitude);
    s.zonal_amplitude = j.value("zonal_amplitude", s.zonal_amplitude);
    s.seasonal_amplitude = j.value("seasonal_amplitude", s.seasonal_amplitude);
    s.trend_per_year = j.value("trend_per_year", s.trend_per_year);
    s.step_year = j.value("step_year", s.step_year);
    s.step_amplitude = j.value("step_amplitude", s.step_amplitude);
    s.noise_sd = j.value("noise_sd", s.noise_sd);
    s.seed = j.value("seed", s.seed);
    return s;
}

json SyntheticSpec::to_json() const {
    return {{"variable", variable},
            {"units", units},
            {"frequency", frequency},
            {"nlat", nlat},
            {"nlon", nlon},
            {"start_year", start_year},
            {"end_year", end_year},
            {"base", base},
            {"meridional_amplitude", meridional_amplitude},
            {"zonal_amplitude", zonal_amplitude},
            {"seasonal_amplitude", seasonal_amplitude},
            {"trend_per_year", trend_per_year},
            {"step_year", step_year},
            {"step_amplitude", step_amplitude},
            {"noise_sd", noise_sd},
            {"seed", seed}};
}

Grid generate_synthetic(const SyntheticSpec& spec) {
    if (spec.nlat == 0 || spec.nlon == 0) fail(Errc::invalid_spec, "zero-size grid");
    if (spec.start_year > spec.end_year) fail(Errc::invalid_spec, "start_year after end_year");
    if (spec.frequency != "monthly" && spec.frequency != "annual")
        fail(Errc::invalid_spec, "frequency must be monthly or annual");
    if (spec.units.empty() || spec.variable.empty()) fail(Errc::invalid_spec, "variable/units empty");
    if (spec.noise_sd < 0.0) fail(Errc::invalid_spec, "negative noise_sd");

    Grid g;
    g.variable = spec.variable;
    g.units = spec.units;
    g.frequency = spec.frequency;
    for (std::size_t i = 0; i < spec.nlat; ++i) g.lat.push_back(-90.0 + (i + 0.5) * 180.0 / spec.nlat);
    for (std::size_t j = 0; j < spec.nlon; ++j) g.lon.push_back((j + 0.5) * 360.0 / spec.nlon);
    const bool monthly = spec.frequency == "monthly";
    for (int y = spec.start_year; y <= spec.end_year; ++y) {
        if (monthly) {
            for (int m = 1; m <= 12; ++m) g.time.push_back(y + (m - 0.5) / 12.0);
        } else {
            g.time.push_back(y + 0.5);
        }
    }
    g.data.resize(g.nt() * g.cells());

    SplitMix64 rng{spec.seed};
    for (std::size_t t = 0; t < g.nt(); ++t) {
        const double time = g.time[t];
        const int year = grid::year_of(time);
        const double phase = 2.0 * std::numbers::pi * (time - year);
        const double seasonal = monthly ? std::sin(phase) : 0.0;
        double temporal = spec.trend_per_year * (time - spec.start_year);
        if (spec.step_year != 0 && year >= spec.step_year) temporal += spec.step_amplitude;
        for (std::size_t i = 0; i < g.nlat(); ++i) {
            const double lat = g.lat[i];
            const double hemi = lat >= 0.0 ? 1.0 : -1.0;
            for (std::size_t j = 0; j < g.nlon(); ++j) {
                double v = spec.base +
                           spec.meridional_amplitude * (std::cos(lat * kDeg) - 2.0 / std::numbers::pi) +
                           spec.zonal_amplitude * std::cos(g.lon[j] * kDeg) +
                           spec.seasonal_amplitude * hemi * seasonal + temporal;
                if (spec.noise_sd > 0.0) v += spec.noise_sd * rng.normal();
                g.at(t, i, j) = v;
            }
        }
    }
    return g;
}

}  // namespace climagent::numerics
