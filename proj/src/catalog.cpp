#include "climagent/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "climagent/error.hpp"
#include "climagent/grid.hpp"

namespace climagent::catalog {

std::string_view to_string(Frequency f) { return f == Frequency::monthly ? "monthly" : "annual"; }

Frequency frequency_from_string(std::string_view s) {
    if (s == "monthly") return Frequency::monthly;
    if (s == "annual") return Frequency::annual;
    fail(Errc::invariant_violation, "frequency '" + std::string(s) + "' not in {monthly, annual}");
}

json DatasetDescriptor::to_json() const {
    return {{"activity", activity},
            {"experiment", experiment},
            {"source_model", source_model},
            {"ensemble_member", ensemble_member},
            {"variable", variable},
            {"frequency", to_string(frequency)},
            {"time_range", {start_year, end_year}},
            {"units", units},
            {"uri", uri}};
}

DatasetDescriptor DatasetDescriptor::from_json(const json& j) {
    auto str = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty())
            fail(Errc::invariant_violation, std::string("missing or empty field '") + key + "'");
        return j[key].get<std::string>();
    };
    DatasetDescriptor d;
    d.activity = str("activity");
    d.experiment = str("experiment");
    d.source_model = str("source_model");
    d.ensemble_member = str("ensemble_member");
    d.variable = str("variable");
    d.frequency = frequency_from_string(str("frequency"));
    d.units = str("units");
    d.uri = str("uri");
    const auto& tr = j.contains("time_range") ? j["time_range"] : json();
    if (!tr.is_array() || tr.size() != 2 || !tr[0].is_number_integer() || !tr[1].is_number_integer())
        fail(Errc::invariant_violation, "time_range must be [start_year, end_year]");
    d.start_year = tr[0].get<int>();
    d.end_year = tr[1].get<int>();
    if (d.start_year > d.end_year)
        fail(Errc::invariant_violation, "time_range start " + std::to_string(d.start_year) +
                                            " > end " + std::to_string(d.end_year));
    if (fs::path(d.uri).is_absolute()) fail(Errc::invariant_violation, "uri must be relative");
    return d;
}

bool CatalogQuery::has_facet() const {
    return activity || experiment || source_model || ensemble_member || variable || frequency ||
           units || covers;
}

bool CatalogQuery::matches(const DatasetDescriptor& d) const {
    if (activity && *activity != d.activity) return false;
    if (experiment && *experiment != d.experiment) return false;
    if (source_model && *source_model != d.source_model) return false;
    if (ensemble_member && *ensemble_member != d.ensemble_member) return false;
    if (variable && *variable != d.variable) return false;
    if (frequency && *frequency != d.frequency) return false;
    if (units && *units != d.units) return false;
    if (covers && (covers->start < d.start_year || covers->end > d.end_year)) return false;
    return true;
}

json CatalogQuery::to_json() const {
    json j = json::object();
    if (activity) j["activity"] = *activity;
    if (experiment) j["experiment"] = *experiment;
    if (source_model) j["source_model"] = *source_model;
    if (ensemble_member) j["ensemble_member"] = *ensemble_member;
    if (variable) j["variable"] = *variable;
    if (frequency) j["frequency"] = to_string(*frequency);
    if (units) j["units"] = *units;
    if (covers) j["covers"] = {covers->start, covers->end};
    j["limit"] = limit;
    return j;
}

CatalogQuery CatalogQuery::from_json(const json& j) {
    if (!j.is_object()) fail(Errc::parse_error, "catalog query must be an object");
    CatalogQuery q;
    auto opt = [&](const char* key, std::optional<std::string>& out) {
        if (j.contains(key)) out = j.at(key).get<std::string>();
    };
    opt("activity", q.activity);
    opt("experiment", q.experiment);
    opt("source_model", q.source_model);
    opt("ensemble_member", q.ensemble_member);
    opt("variable", q.variable);
    opt("units", q.units);
    if (j.contains("frequency")) q.frequency = frequency_from_string(j.at("frequency").get<std::string>());
    if (j.contains("covers")) {
        auto c = j.at("covers").get<std::vector<int>>();
        if (c.size() != 2) fail(Errc::parse_error, "covers must be [start, end]");
        q.covers = numerics::YearRange{c[0], c[1]};
    }
    if (j.contains("limit")) {
        auto limit = j.at("limit").get<long long>();
        if (limit <= 0) fail(Errc::invalid_argument, "limit must be positive");
        q.limit = static_cast<std::size_t>(limit);
    }
    return q;
}

Catalog Catalog::load(const fs::path& index, fs::path data_root, bool allow_rejects) {
    if (!fs::is_regular_file(index)) fail(Errc::parse_error, "catalog index not found: " + index.string());
    std::ifstream in(index);
    Catalog c;
    c.root_ = std::move(data_root);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error& e) {
            c.rejects_.push_back({line_no, std::string("invalid JSON: ") + e.what()});
            continue;
        }
        try {
            c.rows_.push_back(DatasetDescriptor::from_json(row));
        } catch (const Error& e) {
            c.rejects_.push_back({line_no, e.what()});
        }
    }
    if (!c.rejects_.empty() && !allow_rejects) {
        std::string msg = index.string() + ":";
        for (const auto& r : c.rejects_) msg += " row " + std::to_string(r.line) + " (" + r.message + ")";
        fail(Errc::invariant_violation, msg);
    }
    return c;
}

Catalog Catalog::from_descriptors(std::vector<DatasetDescriptor> rows, fs::path data_root) {
    Catalog c;
    c.rows_ = std::move(rows);
    c.root_ = std::move(data_root);
    return c;
}

std::vector<DatasetDescriptor> Catalog::query(const CatalogQuery& q) const {
    if (!q.has_facet()) fail(Errc::empty_query, "catalog query sets no facet");
    std::vector<DatasetDescriptor> out;
    for (const auto& d : rows_)
        if (q.matches(d)) out.push_back(d);
    auto key = [](const DatasetDescriptor& d) {
        return std::tie(d.experiment, d.source_model, d.ensemble_member, d.variable, d.activity, d.uri);
    };
    std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
        if (key(a) != key(b)) return key(a) < key(b);
        return a.frequency < b.frequency;
    });
    if (out.size() > q.limit) out.resize(q.limit);
    return out;
}

fs::path Catalog::resolve(const DatasetDescriptor& d) const {
    auto candidate = root_ / d.uri;
    if (fs::path(d.uri).is_absolute() || !path_within(root_, candidate))
        fail(Errc::missing_file, "uri escapes data root: " + d.uri);
    std::error_code ec;
    auto canonical = fs::canonical(candidate, ec);
    if (ec || !fs::is_regular_file(canonical)) fail(Errc::missing_file, candidate.string());
    if (!path_within(root_, canonical)) fail(Errc::missing_file, "uri escapes data root: " + d.uri);
    return canonical;
}

json Catalog::facet_summary() const {
    std::map<std::string, std::set<std::string>> facets;
    for (const auto& d : rows_) {
        facets["activity"].insert(d.activity);
        facets["experiment"].insert(d.experiment);
        facets["source_model"].insert(d.source_model);
        facets["variable"].insert(d.variable);
        facets["frequency"].insert(std::string(to_string(d.frequency)));
    }
    json j = json::object();
    for (const auto& [k, v] : facets) j[k] = std::vector<std::string>(v.begin(), v.end());
    return j;
}

numerics::SyntheticSpec fixture_spec_for(const DatasetDescriptor& d) {
    numerics::SyntheticSpec s;
    s.variable = d.variable;
    s.units = d.units;
    s.frequency = std::string(to_string(d.frequency));
    s.nlat = 18;
    s.nlon = 24;
    s.start_year = d.start_year;
    s.end_year = d.end_year;
    s.seed = fnv1a64(d.uri);
    // Small per-model offsets keep the ensemble distinguishable.
    const double k = static_cast<double>(fnv1a64(d.source_model) % 5);
    const bool forced = d.experiment != "piControl";
    if (d.variable == "pr") {
        s.base = 3.0e-5 + 1.0e-6 * k;
        s.meridional_amplitude = 2.0e-5;
        s.zonal_amplitude = 2.0e-6;
        s.seasonal_amplitude = 5.0e-6;
        s.trend_per_year = forced ? 2.0e-8 : 0.0;
        s.noise_sd = 1.0e-6;
    } else {
        s.base = 287.0 + 0.3 * (k - 2.0);
        s.meridional_amplitude = 40.0;
        s.zonal_amplitude = 1.5;
        s.seasonal_amplitude = 8.0;
        s.trend_per_year = forced ? 0.02 + 0.002 * k : 0.0;
        s.noise_sd = 0.5;
        if (d.experiment == "abrupt-4xCO2") {
            s.step_year = d.start_year;
            s.step_amplitude = 3.0;
            s.trend_per_year = 0.03;
        }
    }
    if (d.activity == "obs") s.seasonal_amplitude *= 0.9;
    return s;
}

std::size_t generate_fixture_data(const Catalog& catalog, bool overwrite) {
    std::size_t written = 0;
    for (const auto& d : catalog.all()) {
        auto path = catalog.data_root() / d.uri;
        if (!overwrite && fs::exists(path)) continue;
        auto g = numerics::generate_synthetic(fixture_spec_for(d));
        // Six significant digits keeps the fixture archive small.
        for (double& v : g.data) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.6g", v);
            v = std::strtod(buf, nullptr);
        }
        grid::write_grid(path, g);
        ++written;
    }
    return written;
}

}  // namespace climagent::catalog
