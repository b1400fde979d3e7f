#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "climagent/catalog.hpp"
#include "climagent/error.hpp"
#include "climagent/grid.hpp"
#include "support.hpp"

using namespace climagent;
using namespace climagent::catalog;

namespace {

fs::path index_path() { return test::fixtures() / "catalog" / "catalog.jsonl"; }

// Raw rows straight from the index file, untouched by the catalog code.
std::vector<json> raw_rows() {
    std::vector<json> out;
    std::ifstream in(index_path());
    std::string line;
    while (std::getline(in, line))
        if (!trim(line).empty()) out.push_back(json::parse(line));
    return out;
}

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return Errc::invalid_argument;
}

json good_row() {
    return {{"activity", "CMIP"},   {"experiment", "historical"}, {"source_model", "M"},
            {"ensemble_member", "r1"}, {"variable", "tas"},        {"frequency", "monthly"},
            {"time_range", {1990, 1999}}, {"units", "K"},           {"uri", "a/b.json"}};
}

}  // namespace

TEST(Catalog, LoadsBundledIndex) {
    auto c = Catalog::load(index_path(), test::grids_dir());
    EXPECT_EQ(c.all().size(), raw_rows().size());
    EXPECT_TRUE(c.rejects().empty());
    for (const auto& d : c.all()) EXPECT_LE(d.start_year, d.end_year);
}

TEST(Catalog, QueryMatchesBruteForceFilterAndOrder) {
    auto c = Catalog::load(index_path(), test::grids_dir());
    auto rows = raw_rows();
    std::mt19937 rng(7);
    const std::vector<std::string> experiments = {"historical", "abrupt-4xCO2", "ssp245", "obs", "piControl"};
    const std::vector<std::string> variables = {"tas", "pr"};
    const std::vector<std::string> freqs = {"monthly", "annual"};
    for (int trial = 0; trial < 200; ++trial) {
        CatalogQuery q;
        json jq = json::object();
        if (rng() % 2) jq["experiment"] = experiments[rng() % experiments.size()];
        if (rng() % 2) jq["variable"] = variables[rng() % variables.size()];
        if (rng() % 2) jq["frequency"] = freqs[rng() % freqs.size()];
        if (rng() % 3 == 0) {
            int a = 1840 + int(rng() % 200);
            jq["covers"] = {a, a + int(rng() % 30)};
        }
        if (jq.empty()) jq["activity"] = "CMIP";
        q = CatalogQuery::from_json(jq);

        std::vector<json> want;
        for (const auto& r : rows) {
            bool ok = true;
            for (const char* k : {"experiment", "variable", "frequency", "activity"})
                if (jq.contains(k) && r[k] != jq[k]) ok = false;
            if (jq.contains("covers")) {
                int s = jq["covers"][0], e = jq["covers"][1];
                if (s < r["time_range"][0].get<int>() || e > r["time_range"][1].get<int>()) ok = false;
            }
            if (ok) want.push_back(r);
        }
        std::stable_sort(want.begin(), want.end(), [](const json& a, const json& b) {
            auto ka = std::make_tuple(a["experiment"].get<std::string>(), a["source_model"].get<std::string>(),
                                      a["ensemble_member"].get<std::string>());
            auto kb = std::make_tuple(b["experiment"].get<std::string>(), b["source_model"].get<std::string>(),
                                      b["ensemble_member"].get<std::string>());
            return ka < kb;
        });

        auto got = c.query(q);
        ASSERT_EQ(got.size(), want.size()) << jq.dump();
        for (std::size_t i = 0; i < got.size(); ++i) {
            EXPECT_EQ(got[i].experiment, want[i]["experiment"]) << jq.dump();
            EXPECT_EQ(got[i].source_model, want[i]["source_model"]) << jq.dump();
            EXPECT_EQ(got[i].ensemble_member, want[i]["ensemble_member"]) << jq.dump();
        }
    }
}

TEST(Catalog, QueryIsDeterministicAndLimited) {
    auto c = Catalog::load(index_path(), test::grids_dir());
    CatalogQuery q;
    q.variable = "tas";
    auto a = c.query(q);
    auto b = c.query(q);
    EXPECT_EQ(a, b);
    q.limit = 3;
    auto l = c.query(q);
    ASSERT_EQ(l.size(), 3u);
    EXPECT_TRUE(std::equal(l.begin(), l.end(), a.begin()));
}

TEST(Catalog, EmptyQueryRejected) {
    auto c = Catalog::load(index_path(), test::grids_dir());
    EXPECT_EQ(code_of([&] { c.query(CatalogQuery{}); }), Errc::empty_query);
}

TEST(Catalog, UnmatchedFacetGivesEmptyResult) {
    auto c = Catalog::load(index_path(), test::grids_dir());
    CatalogQuery q;
    q.experiment = "piControl";
    EXPECT_TRUE(c.query(q).empty());
}

TEST(Catalog, CoversRangeBoundaries) {
    auto c = Catalog::from_descriptors({DatasetDescriptor::from_json(good_row())}, "/tmp");
    CatalogQuery q;
    q.covers = numerics::YearRange{1990, 1999};
    EXPECT_EQ(c.query(q).size(), 1u);
    q.covers = numerics::YearRange{1989, 1999};
    EXPECT_TRUE(c.query(q).empty());
    q.covers = numerics::YearRange{1990, 2000};
    EXPECT_TRUE(c.query(q).empty());
}

TEST(Descriptor, InvariantViolations) {
    auto broken = [](const char* key, json value) {
        auto r = good_row();
        if (value.is_null()) {
            r.erase(key);
        } else {
            r[key] = value;
        }
        return code_of([&] { DatasetDescriptor::from_json(r); });
    };
    EXPECT_EQ(broken("variable", nullptr), Errc::invariant_violation);
    EXPECT_EQ(broken("variable", ""), Errc::invariant_violation);
    EXPECT_EQ(broken("frequency", "daily"), Errc::invariant_violation);
    EXPECT_EQ(broken("time_range", json::array({2000, 1990})), Errc::invariant_violation);
    EXPECT_EQ(broken("time_range", json::array({2000})), Errc::invariant_violation);
    EXPECT_EQ(broken("uri", "/etc/passwd"), Errc::invariant_violation);
    EXPECT_EQ(broken("units", nullptr), Errc::invariant_violation);
}

TEST(Descriptor, JsonRoundTrip) {
    auto d = DatasetDescriptor::from_json(good_row());
    EXPECT_EQ(DatasetDescriptor::from_json(d.to_json()), d);
}

TEST(Catalog, LoadReportsRejectedRowsByLine) {
    test::TempDir dir;
    auto bad = good_row();
    bad["frequency"] = "daily";
    std::ofstream(dir / "idx.jsonl") << good_row().dump() << "\n\n{not json\n" << bad.dump() << "\n";
    auto c = Catalog::load(dir / "idx.jsonl", dir.path(), true);
    EXPECT_EQ(c.all().size(), 1u);
    ASSERT_EQ(c.rejects().size(), 2u);
    EXPECT_EQ(c.rejects()[0].line, 3u);
    EXPECT_EQ(c.rejects()[1].line, 4u);
    EXPECT_EQ(code_of([&] { Catalog::load(dir / "idx.jsonl", dir.path()); }), Errc::invariant_violation);
    EXPECT_EQ(code_of([&] { Catalog::load(dir / "missing.jsonl", dir.path()); }), Errc::parse_error);
}

TEST(Catalog, ResolveExistingAndMissing) {
    auto c = test::fixture_catalog();
    for (const auto& d : c.all()) {
        auto p = c.resolve(d);
        EXPECT_TRUE(fs::is_regular_file(p));
    }
    auto d = c.all().front();
    d.uri = "nowhere/none.json";
    EXPECT_EQ(code_of([&] { c.resolve(d); }), Errc::missing_file);
    d.uri = "../../etc/passwd";
    EXPECT_EQ(code_of([&] { c.resolve(d); }), Errc::missing_file);
}

TEST(Catalog, GeneratedDataMatchesDescriptors) {
    auto c = test::fixture_catalog();
    for (const auto& d : c.all()) {
        auto g = grid::read_grid(c.resolve(d));
        EXPECT_EQ(g.variable, d.variable);
        EXPECT_EQ(g.units, d.units);
        std::size_t years = std::size_t(d.end_year - d.start_year + 1);
        EXPECT_EQ(g.nt(), d.frequency == Frequency::monthly ? years * 12 : years) << d.uri;
        EXPECT_EQ(grid::year_of(g.time.front()), d.start_year);
        EXPECT_EQ(grid::year_of(g.time.back()), d.end_year);
    }
}

TEST(Catalog, GenerationIsDeterministic) {
    test::TempDir a, b;
    auto ca = Catalog::load(index_path(), a.path());
    auto cb = Catalog::load(index_path(), b.path());
    EXPECT_EQ(generate_fixture_data(ca), ca.all().size());
    EXPECT_EQ(generate_fixture_data(cb), cb.all().size());
    EXPECT_EQ(generate_fixture_data(ca), 0u);
    for (const auto& d : ca.all()) EXPECT_EQ(read_file(a / d.uri), read_file(b / d.uri)) << d.uri;
}

TEST(Catalog, FacetSummaryListsValues) {
    auto c = Catalog::load(index_path(), test::grids_dir());
    auto s = c.facet_summary();
    EXPECT_EQ(s["frequency"], json({"annual", "monthly"}));
    EXPECT_EQ(s["variable"], json({"pr", "tas"}));
}
