#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "climagent/error.hpp"
#include "climagent/grid.hpp"
#include "climagent/numerics.hpp"
#include "support.hpp"

using namespace climagent;
using namespace climagent::numerics;

namespace {

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return Errc::invalid_argument;
}

SyntheticSpec noisy_spec() {
    SyntheticSpec s;
    s.nlat = 9;
    s.nlon = 12;
    s.start_year = 1980;
    s.end_year = 1999;
    s.meridional_amplitude = 30;
    s.zonal_amplitude = 2;
    s.seasonal_amplitude = 5;
    s.trend_per_year = 0.03;
    s.noise_sd = 0.7;
    s.seed = 42;
    return s;
}

}  // namespace

TEST(Synthetic, DeterministicAndShaped) {
    auto a = generate_synthetic(noisy_spec());
    auto b = generate_synthetic(noisy_spec());
    EXPECT_EQ(a.data, b.data);
    EXPECT_EQ(a.nt(), 240u);
    EXPECT_EQ(a.cells(), 108u);
    EXPECT_NEAR(a.time.front(), 1980 + 0.5 / 12, 1e-12);
    grid::validate(a);
    auto s = noisy_spec();
    s.seed = 43;
    EXPECT_NE(generate_synthetic(s).data, a.data);
}

TEST(Synthetic, InvalidSpecs) {
    auto s = noisy_spec();
    s.nlat = 0;
    EXPECT_EQ(code_of([&] { generate_synthetic(s); }), Errc::invalid_spec);
    s = noisy_spec();
    s.start_year = 2001;
    EXPECT_EQ(code_of([&] { generate_synthetic(s); }), Errc::invalid_spec);
    s = noisy_spec();
    s.frequency = "daily";
    EXPECT_EQ(code_of([&] { generate_synthetic(s); }), Errc::invalid_spec);
}

TEST(Climatology, MatchesBruteForce) {
    auto g = generate_synthetic(noisy_spec());
    for (auto [y0, y1] : {std::pair{1980, 1999}, std::pair{1985, 1994}, std::pair{1990, 1990}}) {
        auto c = climatology_mean(g, {y0, y1});
        EXPECT_NEAR(c.global_mean, test::brute_climatology(g, y0, y1), 1e-12) << y0 << "-" << y1;
        EXPECT_EQ(c.map.nt(), 1u);
    }
}

TEST(Climatology, FillValuesExcluded) {
    auto g = generate_synthetic(noisy_spec());
    std::mt19937 rng(3);
    for (int k = 0; k < 300; ++k) g.data[rng() % g.data.size()] = g.fill_value;
    // A cell with no valid data drops out entirely.
    for (std::size_t t = 0; t < g.nt(); ++t) g.at(t, 4, 5) = g.fill_value;
    auto c = climatology_mean(g, {1980, 1999});
    EXPECT_NEAR(c.global_mean, test::brute_climatology(g, 1980, 1999), 1e-12);
    EXPECT_TRUE(c.map.is_fill(c.map.at(0, 4, 5)));
}

TEST(Climatology, ZonalWaveAveragesOut) {
    SyntheticSpec s;
    s.nlat = 6;
    s.nlon = 16;
    s.zonal_amplitude = 10;
    s.base = 250;
    auto c = climatology_mean(generate_synthetic(s), {1990, 1999});
    EXPECT_NEAR(c.global_mean, 250.0, 1e-9);
}

TEST(Climatology, PeriodOutOfRange) {
    auto g = generate_synthetic(noisy_spec());
    EXPECT_EQ(code_of([&] { climatology_mean(g, {1970, 1990}); }), Errc::period_out_of_range);
    EXPECT_EQ(code_of([&] { climatology_mean(g, {1990, 2000}); }), Errc::period_out_of_range);
    EXPECT_EQ(code_of([&] { climatology_mean(g, {1995, 1990}); }), Errc::period_out_of_range);
}

TEST(Anomaly, SumsToZeroOverOwnBaseline) {
    auto g = generate_synthetic(noisy_spec());
    for (auto [y0, y1] : {std::pair{1980, 1999}, std::pair{1981, 1990}}) {
        auto s = anomaly_series(g, {y0, y1});
        double sum = 0;
        for (std::size_t t = 0; t < s.time.size(); ++t)
            if (int(std::floor(s.time[t])) >= y0 && int(std::floor(s.time[t])) <= y1) sum += s.values[t];
        EXPECT_NEAR(sum, 0.0, 1e-9);
    }
    auto f = anomaly_field(g, {1980, 1999});
    for (std::size_t c = 0; c < g.cells(); ++c) {
        double sum = 0;
        for (std::size_t t = 0; t < g.nt(); ++t) sum += f.data[t * g.cells() + c];
        EXPECT_NEAR(sum, 0.0, 1e-9);
    }
}

TEST(Trend, RecoversInjectedRateExactly) {
    SyntheticSpec s;
    s.nlat = 6;
    s.nlon = 8;
    s.frequency = "annual";
    s.trend_per_year = 0.02;
    auto g = generate_synthetic(s);
    auto series = global_mean_series(g);
    auto fit = linear_trend(series.time, series.values);
    EXPECT_NEAR(fit.slope, 0.02, 1e-12);

    std::vector<double> x, y;
    for (int yr = 1985; yr <= 2014; ++yr) {
        x.push_back(yr);
        y.push_back(0.02 * yr - 30.0);
    }
    fit = linear_trend(x, y);
    EXPECT_NEAR(fit.slope, 0.02, 1e-12);
    EXPECT_NEAR(fit.intercept, -30.0, 1e-9);
}

TEST(Trend, MonthlyAnnualMeansRecoverRate) {
    SyntheticSpec s;
    s.nlat = 6;
    s.nlon = 8;
    s.trend_per_year = 0.02;
    s.seasonal_amplitude = 4;
    auto annual = annual_means(global_mean_series(generate_synthetic(s)));
    EXPECT_EQ(annual.time.size(), 30u);
    EXPECT_NEAR(linear_trend(annual.time, annual.values).slope, 0.02, 1e-12);
}

TEST(Trend, DegenerateInputs) {
    std::vector<double> one = {1};
    EXPECT_EQ(code_of([&] { linear_trend(one, one); }), Errc::degenerate_input);
    std::vector<double> same = {2, 2, 2}, y = {1, 2, 3};
    EXPECT_EQ(code_of([&] { linear_trend(same, y); }), Errc::degenerate_input);
    std::vector<double> two = {1, 2};
    EXPECT_EQ(code_of([&] { linear_trend(two, y); }), Errc::degenerate_input);
}

TEST(Gregory, NoiseFreeForcingAndFeedback) {
    std::vector<double> dt, n;
    for (int i = 0; i < 150; ++i) {
        double t = 7.0 * (1.0 - std::exp(-i / 20.0));
        dt.push_back(t);
        n.push_back(8.0 - 1.0 * t);
    }
    auto r = gregory_regression(dt, n);
    EXPECT_NEAR(r.forcing, 8.0, 1e-9);
    EXPECT_NEAR(r.feedback, -1.0, 1e-9);
    ASSERT_TRUE(r.ecs2x.has_value());
    EXPECT_NEAR(*r.ecs2x, 4.0, 1e-6);
    EXPECT_FALSE(r.non_negative_lambda);
}

TEST(Gregory, NonNegativeFeedbackFlagged) {
    std::vector<double> dt = {0, 1, 2, 3}, n = {1, 2, 3, 4};
    auto r = gregory_regression(dt, n);
    EXPECT_TRUE(r.non_negative_lambda);
    EXPECT_FALSE(r.ecs2x.has_value());
}

TEST(Variance, MatchesDirectComputation) {
    auto g = generate_synthetic(noisy_spec());
    auto v = time_variance(g, {1980, 1999});
    for (std::size_t c : {0u, 17u, 107u}) {
        double m = 0;
        for (std::size_t t = 0; t < g.nt(); ++t) m += g.data[t * g.cells() + c];
        m /= double(g.nt());
        double ss = 0;
        for (std::size_t t = 0; t < g.nt(); ++t) ss += std::pow(g.data[t * g.cells() + c] - m, 2);
        EXPECT_NEAR(v.data[c], ss / double(g.nt()), 1e-9);
    }
    EXPECT_EQ(v.units, "(K)2");
}

TEST(Subset, TimeAndRegion) {
    auto g = generate_synthetic(noisy_spec());
    auto t = subset_time(g, {1990, 1994});
    EXPECT_EQ(t.nt(), 60u);
    EXPECT_EQ(grid::year_of(t.time.front()), 1990);
    EXPECT_EQ(t.at(0, 2, 3), g.at(120, 2, 3));
    auto r = subset_region(g, 0, 90, 0, 90);
    for (double lat : r.lat) EXPECT_GE(lat, 0);
    for (double lon : r.lon) EXPECT_LE(lon, 90);
    auto wrap = subset_region(g, -90, 90, 300, 60);
    for (double lon : wrap.lon) EXPECT_TRUE(lon >= 300 || lon <= 60);
    EXPECT_EQ(code_of([&] { subset_region(g, 10, 11, 0, 360); }), Errc::invalid_argument);
}

TEST(Regrid, IdentityAndLinearFields) {
    SyntheticSpec s;
    s.nlat = 18;
    s.nlon = 24;
    s.frequency = "annual";
    s.start_year = 2000;
    s.end_year = 2001;
    auto g = generate_synthetic(s);
    auto same = regrid_bilinear(g, 18, 24);
    for (std::size_t k = 0; k < g.data.size(); ++k) EXPECT_NEAR(same.data[k], g.data[k], 1e-9);
    // A constant field stays constant on any target grid.
    auto coarse = regrid_bilinear(g, 5, 7);
    for (double v : coarse.data) EXPECT_NEAR(v, s.base, 1e-9);
    // Linear in latitude: interior target points are reproduced exactly.
    for (std::size_t t = 0; t < g.nt(); ++t)
        for (std::size_t i = 0; i < g.nlat(); ++i)
            for (std::size_t j = 0; j < g.nlon(); ++j) g.at(t, i, j) = g.lat[i];
    auto fine = regrid_bilinear(g, 36, 48);
    for (std::size_t i = 0; i < fine.nlat(); ++i) {
        double want = std::clamp(fine.lat[i], g.lat.front(), g.lat.back());
        EXPECT_NEAR(fine.at(0, i, 5), want, 1e-9);
    }
}

TEST(Units, ConversionTable) {
    auto c = find_conversion("K", "degC");
    EXPECT_DOUBLE_EQ(c.offset, -273.15);
    SyntheticSpec s;
    s.nlat = 2;
    s.nlon = 2;
    s.frequency = "annual";
    s.start_year = s.end_year = 2000;
    auto g = generate_synthetic(s);
    auto out = convert_units(g, c);
    EXPECT_EQ(out.units, "degC");
    EXPECT_NEAR(out.data[0], 287.0 - 273.15, 1e-12);
    EXPECT_EQ(find_conversion("kg m-2 s-1", "mm day-1").scale, 86400.0);
    EXPECT_EQ(code_of([&] { find_conversion("K", "furlong"); }), Errc::unknown_unit_conversion);
    EXPECT_EQ(code_of([&] { convert_units(g, find_conversion("Pa", "hPa")); }), Errc::unknown_unit_conversion);
}

TEST(GridJson, RoundTripAndValidation) {
    auto g = generate_synthetic(noisy_spec());
    test::TempDir dir;
    grid::write_grid(dir / "g.json", g);
    auto back = grid::read_grid(dir / "g.json");
    EXPECT_EQ(back.data, g.data);
    EXPECT_EQ(back.lat, g.lat);
    g.data.pop_back();
    EXPECT_EQ(code_of([&] { grid::validate(g); }), Errc::invariant_violation);
}
