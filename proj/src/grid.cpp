#include "climagent/grid.hpp"

#include <cmath>

#include "climagent/error.hpp"

namespace climagent::grid {

namespace {

bool strictly_increasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) return false;
    return true;
}

}  // namespace

void validate(const Grid& g) {
    if (g.units.empty()) fail(Errc::invariant_violation, "grid units are empty");
    if (g.variable.empty()) fail(Errc::invariant_violation, "grid variable is empty");
    if (g.time.empty() || g.lat.empty() || g.lon.empty())
        fail(Errc::invariant_violation, "grid has an empty dimension");
    if (g.data.size() != g.nt() * g.nlat() * g.nlon())
        fail(Errc::invariant_violation,
             "data length " + std::to_string(g.data.size()) + " != product of dims " +
                 std::to_string(g.nt() * g.nlat() * g.nlon()));
    if (!strictly_increasing(g.time) || !strictly_increasing(g.lat) || !strictly_increasing(g.lon))
        fail(Errc::invariant_violation, "coordinates must be strictly increasing");
}

json to_json(const Grid& g) {
    json header = {
        {"variable", g.variable},
        {"units", g.units},
        {"frequency", g.frequency},
        {"dims", {"time", "lat", "lon"}},
        {"coords", {{"time", g.time}, {"lat", g.lat}, {"lon", g.lon}}},
        {"fill_value", g.fill_value},
    };
    return {{"header", header}, {"data", g.data}};
}

Grid grid_from_json(const json& j) {
    Grid g;
    try {
        const auto& h = j.at("header");
        g.variable = h.at("variable").get<std::string>();
        g.units = h.at("units").get<std::string>();
        g.frequency = h.value("frequency", "monthly");
        auto dims = h.at("dims").get<std::vector<std::string>>();
        if (dims != std::vector<std::string>{"time", "lat", "lon"})
            fail(Errc::invariant_violation, "dims must be [time, lat, lon]");
        g.time = h.at("coords").at("time").get<std::vector<double>>();
        g.lat = h.at("coords").at("lat").get<std::vector<double>>();
        g.lon = h.at("coords").at("lon").get<std::vector<double>>();
        g.fill_value = h.value("fill_value", 1.0e20);
        g.data = j.at("data").get<std::vector<double>>();
    } catch (const json::exception& e) {
        fail(Errc::parse_error, std::string("malformed Grid-JSON: ") + e.what());
    }
    validate(g);
    return g;
}

Grid read_grid(const fs::path& path) { return grid_from_json(read_json_file(path)); }

void write_grid(const fs::path& path, const Grid& g) {
    validate(g);
    write_file_atomic(path, to_json(g).dump());
}

json to_json(const Series& s) {
    return {{"kind", "series"}, {"variable", s.variable}, {"units", s.units},
            {"label", s.label}, {"time", s.time},         {"values", s.values}};
}

Series series_from_json(const json& j) {
    Series s;
    try {
        if (j.value("kind", "") != "series") fail(Errc::parse_error, "not a series document");
        s.variable = j.value("variable", "");
        s.units = j.at("units").get<std::string>();
        s.label = j.value("label", "");
        s.time = j.at("time").get<std::vector<double>>();
        s.values = j.at("values").get<std::vector<double>>();
    } catch (const json::exception& e) {
        fail(Errc::parse_error, std::string("malformed series: ") + e.what());
    }
    if (s.time.size() != s.values.size())
        fail(Errc::invariant_violation, "series time/value length mismatch");
    return s;
}

Series read_series(const fs::path& path) { return series_from_json(read_json_file(path)); }

void write_series(const fs::path& path, const Series& s) {
    write_file_atomic(path, to_json(s).dump());
}

int year_of(double decimal_year) { return static_cast<int>(std::floor(decimal_year)); }

}  // namespace climagent::grid
