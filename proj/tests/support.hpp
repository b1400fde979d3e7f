#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <string>

#include "climagent/catalog.hpp"
#include "climagent/gateway.hpp"
#include "climagent/library.hpp"
#include "climagent/numerics.hpp"
#include "climagent/util.hpp"

namespace climagent::test {

inline fs::path source_dir() { return CLIMAGENT_SOURCE_DIR; }
inline fs::path fixtures() { return source_dir() / "fixtures"; }
inline fs::path tools_binary() { return CLIMATE_TOOLS_BIN; }
inline fs::path cli_binary() { return CLIMAGENT_BIN; }
inline fs::path grids_dir() { return CLIMAGENT_TEST_GRIDS; }

// Removes itself on destruction.
class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "climagent-test-XXXXXX").string();
        path_ = ::mkdtemp(tmpl.data());
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

// The bundled catalog over the shared test grid directory (generated on
// first use, reused afterwards).
inline catalog::Catalog fixture_catalog() {
    auto c = catalog::Catalog::load(fixtures() / "catalog" / "catalog.jsonl", grids_dir());
    catalog::generate_fixture_data(c, false);
    return c;
}

// A gateway with the bundled mock fixtures registered as "mock".
struct MockGateway {
    gateway::Gateway gateway;
    std::shared_ptr<gateway::MockBackend> mock;

    explicit MockGateway(fs::path dir = fixtures() / "mock") {
        mock = std::make_shared<gateway::MockBackend>("mock", std::move(dir));
        gateway.register_backend(mock);
    }

    void route(std::string agent, std::vector<std::string> contains, std::string text) {
        gateway::MockBackend::Route r;
        r.agent = std::move(agent);
        r.contains = std::move(contains);
        r.text = std::move(text);
        mock->add_route(std::move(r));
    }
};

// Independent reimplementation of the hash embedding: lowercase, split on
// non-alphanumerics, FNV-1a 64 into `dim` buckets, L2 normalize.
inline std::vector<double> oracle_embed(const std::string& text, std::size_t dim = 256) {
    std::vector<double> v(dim, 0.0);
    std::string tok;
    auto flush = [&] {
        if (tok.empty()) return;
        std::uint64_t h = 14695981039346656037ull;
        for (unsigned char c : tok) {
            h ^= c;
            h *= 1099511628211ull;
        }
        v[h % dim] += 1.0;
        tok.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            tok.push_back(char(std::tolower(c)));
        } else {
            flush();
        }
    }
    flush();
    double n = 0;
    for (double x : v) n += x * x;
    if (n > 0)
        for (double& x : v) x /= std::sqrt(n);
    return v;
}

inline double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return na == 0 || nb == 0 ? 0.0 : d / (std::sqrt(na) * std::sqrt(nb));
}

// A shell script that writes a minimal valid result.json with one level
// statistic of the given value.
inline std::string valid_script(double value = 288.0) {
    return "set -eu\n"
           "cd \"$WORKSPACE\"\n"
           "mkdir -p outputs\n"
           "printf '{\"units\":\"K\",\"values\":[1.0,2.0]}' > outputs/series.json\n"
           "printf '{\"task_id\":\"%s\",\"variable\":\"tas\",\"units\":\"K\","
           "\"outputs\":[{\"path\":\"outputs/series.json\",\"kind\":\"series\"}],"
           "\"statistics\":[{\"name\":\"m\",\"value\":%s,\"units\":\"K\",\"kind\":\"level\","
           "\"variable\":\"tas\"}],\"figures\":[]}' \"$CLIMAGENT_TASK_ID\" " +
           std::to_string(value) + " > result.json\n";
}

inline std::string fenced_sh(const std::string& body) { return "```sh\n" + body + "```\n"; }

inline const std::string kBrokenScript = "echo 'NameError: undefined thing' >&2\nexit 1\n";

// Code generation for `task` fails until debug revision `fix_round`, which
// returns a valid script.
inline void script_debug_fix(MockGateway& mg, const std::string& task, int fix_round) {
    mg.route("lab.codegen", {"task: " + task + "\n"}, fenced_sh(kBrokenScript));
    mg.route("lab.debug", {"task: " + task + "\n"}, fenced_sh(kBrokenScript));
    mg.route("lab.debug", {"task: " + task + "\n", "revision: " + std::to_string(fix_round) + "\n"},
             fenced_sh(valid_script()));
}

// Brute-force climatology: select steps by calendar year of each time
// coordinate, average per cell, weight rows by cos(lat).
inline double brute_climatology(const grid::Grid& g, int y0, int y1) {
    const double deg = std::numbers::pi / 180.0;
    double num = 0, den = 0;
    for (std::size_t i = 0; i < g.nlat(); ++i) {
        for (std::size_t j = 0; j < g.nlon(); ++j) {
            double sum = 0;
            int n = 0;
            for (std::size_t t = 0; t < g.nt(); ++t) {
                int year = int(std::floor(g.time[t]));
                if (year < y0 || year > y1) continue;
                double v = g.data[(t * g.nlat() + i) * g.nlon() + j];
                if (v == g.fill_value) continue;
                sum += v;
                ++n;
            }
            if (n == 0) continue;
            num += std::cos(g.lat[i] * deg) * (sum / n);
            den += std::cos(g.lat[i] * deg);
        }
    }
    return num / den;
}

inline void seed_library(library::Library& lib) {
    lib.seed_from(fixtures() / "library" / "seed.jsonl", tools_binary().parent_path());
}

}  // namespace climagent::test
