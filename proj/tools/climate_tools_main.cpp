// climate-tools: preprocessing operators and reference diagnostics on
// Grid-JSON files. Preprocessing subcommands rewrite --input into --output;
// diagnostics write outputs/<name>.{json,svg,meta.json} under --workspace and
// merge their entries into <workspace>/result.json.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "climagent/error.hpp"
#include "climagent/figures.hpp"
#include "climagent/grid.hpp"
#include "climagent/numerics.hpp"

using namespace climagent;
using numerics::YearRange;

namespace {

YearRange parse_range(const std::string& s) {
    auto dash = s.find('-', 1);
    if (dash == std::string::npos) fail(Errc::invalid_argument, "expected START-END, got '" + s + "'");
    try {
        return {std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
    } catch (const std::exception&) {
        fail(Errc::invalid_argument, "expected START-END, got '" + s + "'");
    }
}

std::string range_str(YearRange r) { return std::to_string(r.start) + "-" + std::to_string(r.end); }

fs::path resolve(const fs::path& ws, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() || ws.empty() ? path : ws / path;
}

bool is_grid_doc(const fs::path& p) {
    if (p.extension() != ".json" || p.filename() == "result.json") return false;
    if (p.filename().string().ends_with(".meta.json")) return false;
    auto j = read_json_file(p);
    return j.is_object() && j.contains("header") && j.contains("data");
}

// A single Grid-JSON file, or the member mean of every grid in a directory.
grid::Grid load_input(const fs::path& path) {
    if (!fs::is_directory(path)) return grid::read_grid(path);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
        if (e.is_regular_file() && is_grid_doc(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(Errc::missing_file, "no Grid-JSON files in " + path.string());
    auto mean = grid::read_grid(files.front());
    std::vector<std::size_t> counts(mean.data.size(), 0);
    for (std::size_t k = 0; k < mean.data.size(); ++k) {
        if (mean.is_fill(mean.data[k])) {
            mean.data[k] = 0.0;
        } else {
            counts[k] = 1;
        }
    }
    for (std::size_t f = 1; f < files.size(); ++f) {
        auto g = grid::read_grid(files[f]);
        if (g.time != mean.time || g.lat != mean.lat || g.lon != mean.lon)
            fail(Errc::invariant_violation, files[f].filename().string() + " is on a different grid; regrid first");
        if (g.units != mean.units)
            fail(Errc::invariant_violation, files[f].filename().string() + " has units " + g.units + ", expected " + mean.units);
        for (std::size_t k = 0; k < g.data.size(); ++k) {
            if (g.is_fill(g.data[k])) continue;
            mean.data[k] += g.data[k];
            ++counts[k];
        }
    }
    for (std::size_t k = 0; k < mean.data.size(); ++k)
        mean.data[k] = counts[k] ? mean.data[k] / static_cast<double>(counts[k]) : mean.fill_value;
    return mean;
}

// Accumulates manifest entries into <workspace>/result.json.
struct Manifest {
    fs::path ws;
    json doc;

    explicit Manifest(fs::path workspace) : ws(std::move(workspace)) {
        auto path = ws / "result.json";
        doc = fs::exists(path) ? read_json_file(path) : json::object();
        if (!doc.is_object()) doc = json::object();
        const char* task = std::getenv("CLIMAGENT_TASK_ID");
        if (!doc.contains("task_id")) doc["task_id"] = task ? task : "";
        for (const char* k : {"outputs", "statistics", "figures"})
            if (!doc.contains(k)) doc[k] = json::array();
    }

    void header(const std::string& variable, const std::string& units) {
        if (!doc.contains("variable")) doc["variable"] = variable;
        if (!doc.contains("units")) doc["units"] = units;
    }
    void output(const std::string& rel, const std::string& kind) {
        for (const auto& o : doc["outputs"])
            if (o.value("path", "") == rel) return;
        doc["outputs"].push_back({{"path", rel}, {"kind", kind}});
    }
    void statistic(const std::string& name, double value, const std::string& units, const std::string& kind,
                   const std::string& variable) {
        json s = {{"name", name}, {"value", value}, {"units", units}, {"kind", kind}, {"variable", variable}};
        for (auto& o : doc["statistics"])
            if (o.value("name", "") == name) {
                o = s;
                return;
            }
        doc["statistics"].push_back(s);
    }
    void figure(const std::string& rel, const std::string& sidecar) {
        for (const auto& o : doc["figures"])
            if (o.value("path", "") == rel) return;
        doc["figures"].push_back({{"path", rel}, {"sidecar", sidecar}});
    }
    void save() const { write_json_file(ws / "result.json", doc); }
};

void write_figure(Manifest& m, const std::string& name, const std::string& svg, const json& meta) {
    auto out = m.ws / "outputs";
    fs::create_directories(out);
    write_file_atomic(out / (name + ".svg"), svg);
    write_json_file(out / (name + ".meta.json"), meta);
    m.figure("outputs/" + name + ".svg", "outputs/" + name + ".meta.json");
}

std::vector<double> years_of(const grid::Series& s) {
    std::vector<double> out;
    for (double t : s.time) out.push_back(std::floor(t));
    return out;
}

struct Common {
    std::string input;
    std::string output;
};

void add_inplace(CLI::App* sub, Common& c) {
    sub->add_option("--input", c.input, "Grid-JSON input")->required();
    sub->add_option("--output", c.output, "Grid-JSON output (may equal --input)")->required();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Preprocessing operators and reference diagnostics on Grid-JSON data"};
    app.require_subcommand(1);

    Common io;
    std::size_t nlat = 0, nlon = 0;
    auto* regrid = app.add_subcommand("regrid", "Bilinear regrid onto a global NLAT x NLON grid");
    add_inplace(regrid, io);
    regrid->add_option("--nlat", nlat)->required()->check(CLI::PositiveNumber);
    regrid->add_option("--nlon", nlon)->required()->check(CLI::PositiveNumber);

    std::string from_units, to_units;
    double scale = 1.0, offset = 0.0;
    auto* convert = app.add_subcommand("convert-units", "Apply value * scale + offset and relabel units");
    add_inplace(convert, io);
    convert->add_option("--from", from_units)->required();
    convert->add_option("--to", to_units)->required();
    convert->add_option("--scale", scale);
    convert->add_option("--offset", offset);

    std::string period, baseline;
    auto* subset_time = app.add_subcommand("subset-time", "Keep the time steps inside a year range");
    add_inplace(subset_time, io);
    subset_time->add_option("--period", period)->required();

    double lat_min = -90, lat_max = 90, lon_min = 0, lon_max = 360;
    auto* subset_region = app.add_subcommand("subset-region", "Keep a latitude/longitude box");
    add_inplace(subset_region, io);
    subset_region->add_option("--lat-min", lat_min)->required();
    subset_region->add_option("--lat-max", lat_max)->required();
    subset_region->add_option("--lon-min", lon_min)->required();
    subset_region->add_option("--lon-max", lon_max)->required();

    auto* time_mean = app.add_subcommand("time-mean", "Per-cell mean over a year range");
    add_inplace(time_mean, io);
    time_mean->add_option("--period", period)->required();
    auto* time_variance = app.add_subcommand("time-variance", "Per-cell variance over a year range");
    add_inplace(time_variance, io);
    time_variance->add_option("--period", period)->required();
    auto* anomaly_field = app.add_subcommand("anomaly-field", "Per-cell departure from a baseline mean");
    add_inplace(anomaly_field, io);
    anomaly_field->add_option("--baseline", baseline)->required();

    std::string workspace, name, input, delta_t, flux;
    auto diag = [&](const char* cmd, const char* desc) {
        auto* s = app.add_subcommand(cmd, desc);
        s->add_option("--workspace", workspace, "task workspace")->required();
        s->add_option("--name", name, "output stem")->required();
        return s;
    };
    auto* climatology = diag("climatology", "Time-mean map and area-weighted global mean");
    climatology->add_option("--input", input)->required();
    climatology->add_option("--period", period)->required();
    auto* anomaly = diag("anomaly", "Area-weighted anomaly series relative to a baseline");
    anomaly->add_option("--input", input)->required();
    anomaly->add_option("--baseline", baseline)->required();
    auto* trend = diag("trend", "Least-squares trend of the annual global-mean series");
    trend->add_option("--input", input)->required();
    trend->add_option("--period", period);
    std::string reference;
    auto* difference = diag("difference", "Map of input minus reference and its area-weighted mean");
    difference->add_option("--input", input)->required();
    difference->add_option("--reference", reference)->required();
    auto* gregory = diag("gregory", "Regress net TOA flux on temperature change");
    gregory->add_option("--delta-t", delta_t, "series file")->required();
    gregory->add_option("--flux", flux, "series file")->required();

    std::string spec_text, out_path;
    auto* gen = app.add_subcommand("gen-grid", "Write a deterministic synthetic grid");
    gen->add_option("--spec", spec_text, "JSON object or path to one")->required();
    gen->add_option("--output", out_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        auto inplace = [&](auto op) {
            auto g = grid::read_grid(io.input);
            auto out = op(g);
            grid::validate(out);
            grid::write_grid(io.output, out);
        };
        if (*regrid) {
            inplace([&](const grid::Grid& g) { return numerics::regrid_bilinear(g, nlat, nlon); });
        } else if (*convert) {
            inplace([&](const grid::Grid& g) {
                if (g.units != from_units)
                    fail(Errc::unknown_unit_conversion, "input units are " + g.units + ", not " + from_units);
                return numerics::convert_units(g, {from_units, to_units, scale, offset});
            });
        } else if (*subset_time) {
            inplace([&](const grid::Grid& g) { return numerics::subset_time(g, parse_range(period)); });
        } else if (*subset_region) {
            inplace([&](const grid::Grid& g) { return numerics::subset_region(g, lat_min, lat_max, lon_min, lon_max); });
        } else if (*time_mean) {
            inplace([&](const grid::Grid& g) { return numerics::time_mean(g, parse_range(period)); });
        } else if (*time_variance) {
            inplace([&](const grid::Grid& g) { return numerics::time_variance(g, parse_range(period)); });
        } else if (*anomaly_field) {
            inplace([&](const grid::Grid& g) { return numerics::anomaly_field(g, parse_range(baseline)); });
        } else if (*gen) {
            json spec = fs::is_regular_file(spec_text) ? read_json_file(spec_text) : json::parse(spec_text);
            grid::write_grid(out_path, numerics::generate_synthetic(numerics::SyntheticSpec::from_json(spec)));
        } else {
            fs::path ws(workspace);
            Manifest m(ws);
            fs::create_directories(ws / "outputs");
            const std::string stem = "outputs/" + name;
            if (*climatology) {
                auto g = load_input(resolve(ws, input));
                auto r = parse_range(period);
                auto c = numerics::climatology_mean(g, r);
                grid::write_grid(ws / (stem + ".json"), c.map);
                m.header(g.variable, g.units);
                m.output(stem + ".json", "grid");
                m.statistic(name + "_global_mean", c.global_mean, g.units, "level", g.variable);
                auto title = g.variable + " climatology " + range_str(r);
                figures::Axes axes{title, "Longitude", "degrees_east", "Latitude", "degrees_north"};
                write_figure(m, name, figures::map_svg(c.map, title),
                             figures::sidecar(stem + ".svg", "map", axes, g.variable, g.units, range_str(r)));
            } else if (*anomaly) {
                auto g = load_input(resolve(ws, input));
                auto r = parse_range(baseline);
                auto s = numerics::anomaly_series(g, r);
                if (g.frequency != "annual") s = numerics::annual_means(s);
                s.label = g.variable + " anomaly";
                grid::write_series(ws / (stem + ".json"), s);
                m.header(g.variable, g.units);
                m.output(stem + ".json", "series");
                m.statistic(name + "_final_anomaly", s.values.back(), g.units, "change", g.variable);
                auto title = g.variable + " anomaly relative to " + range_str(r);
                figures::Axes axes{title, "Year", "year", g.variable + " anomaly", g.units};
                write_figure(m, name, figures::line_plot_svg({{s.label, years_of(s), s.values}}, axes),
                             figures::sidecar(stem + ".svg", "line", axes, g.variable, g.units, range_str(r)));
            } else if (*trend) {
                auto g = load_input(resolve(ws, input));
                YearRange r{grid::year_of(g.time.front()), grid::year_of(g.time.back())};
                if (!period.empty()) {
                    r = parse_range(period);
                    g = numerics::subset_time(g, r);
                }
                auto s = numerics::global_mean_series(g);
                if (g.frequency != "annual") s = numerics::annual_means(s);
                s.label = g.variable + " global mean";
                auto x = years_of(s);
                auto fit = numerics::linear_trend(x, s.values);
                grid::write_series(ws / (stem + ".json"), s);
                m.header(g.variable, g.units);
                m.output(stem + ".json", "series");
                m.statistic(name + "_slope", fit.slope, g.units + " yr-1", "rate", g.variable);
                m.statistic(name + "_intercept", fit.intercept, g.units, "intercept", g.variable);
                std::vector<double> fitted;
                for (double xv : x) fitted.push_back(fit.slope * xv + fit.intercept);
                auto title = g.variable + " global-mean trend " + range_str(r);
                figures::Axes axes{title, "Year", "year", g.variable, g.units};
                write_figure(m, name,
                             figures::line_plot_svg({{s.label, x, s.values}, {"least-squares fit", x, fitted}}, axes),
                             figures::sidecar(stem + ".svg", "line", axes, g.variable, g.units, range_str(r)));
            } else if (*difference) {
                auto a = load_input(resolve(ws, input));
                auto b = load_input(resolve(ws, reference));
                if (a.nt() != 1 || b.nt() != 1) fail(Errc::invariant_violation, "difference expects single time-step maps");
                if (a.lat != b.lat || a.lon != b.lon) fail(Errc::invariant_violation, "input and reference grids differ; regrid first");
                if (a.units != b.units) fail(Errc::invariant_violation, "units differ: " + a.units + " vs " + b.units);
                auto d = a;
                for (std::size_t k = 0; k < d.data.size(); ++k)
                    d.data[k] = a.is_fill(a.data[k]) || b.is_fill(b.data[k]) ? d.fill_value : a.data[k] - b.data[k];
                grid::write_grid(ws / (stem + ".json"), d);
                m.header(a.variable, a.units);
                m.output(stem + ".json", "grid");
                m.statistic(name + "_mean_difference", numerics::area_weighted_mean(d, 0), a.units, "change", a.variable);
                auto title = a.variable + " difference (input minus reference)";
                figures::Axes axes{title, "Longitude", "degrees_east", "Latitude", "degrees_north"};
                write_figure(m, name, figures::map_svg(d, title),
                             figures::sidecar(stem + ".svg", "map", axes, a.variable, a.units, ""));
            } else if (*gregory) {
                auto dt = grid::read_series(resolve(ws, delta_t));
                auto n = grid::read_series(resolve(ws, flux));
                auto res = numerics::gregory_regression(dt.values, n.values);
                json out = {{"forcing", res.forcing},
                            {"feedback", res.feedback},
                            {"non_negative_lambda", res.non_negative_lambda},
                            {"ecs2x", res.ecs2x ? json(*res.ecs2x) : json(nullptr)}};
                write_json_file(ws / (stem + ".json"), out);
                m.header(n.variable, n.units);
                m.output(stem + ".json", "regression");
                m.statistic(name + "_forcing", res.forcing, "W m-2", "coefficient", n.variable);
                m.statistic(name + "_feedback", res.feedback, "W m-2 K-1", "coefficient", n.variable);
                if (res.ecs2x) m.statistic(name + "_ecs2x", *res.ecs2x, "K", "sensitivity", dt.variable);
                std::vector<double> fitted;
                for (double v : dt.values) fitted.push_back(res.forcing + res.feedback * v);
                figures::Axes axes{"Gregory regression", "Temperature change", dt.units, "Net TOA flux", n.units};
                write_figure(m, name,
                             figures::line_plot_svg({{"annual means", dt.values, n.values}, {"fit", dt.values, fitted}}, axes),
                             figures::sidecar(stem + ".svg", "scatter", axes, n.variable, n.units, ""));
            }
            m.save();
        }
    } catch (const Error& e) {
        std::cerr << "climate-tools: " << to_string(e.code()) << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "climate-tools: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
