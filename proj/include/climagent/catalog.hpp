#pragma once

#include <optional>
#include <string>
#include <vector>

#include "climagent/numerics.hpp"
#include "climagent/util.hpp"

// The data library: a faceted catalog of simulation and observation datasets.
namespace climagent::catalog {

enum class Frequency { monthly, annual };

std::string_view to_string(Frequency f);
Frequency frequency_from_string(std::string_view s);

struct DatasetDescriptor {
    std::string activity;
    std::string experiment;
    std::string source_model;
    std::string ensemble_member;
    std::string variable;
    Frequency frequency = Frequency::monthly;
    int start_year = 0;
    int end_year = 0;
    std::string units;
    std::string uri;  // relative to the catalog's data root

    bool operator==(const DatasetDescriptor&) const = default;

    json to_json() const;
    // Throws invariant_violation on missing fields or broken invariants.
    static DatasetDescriptor from_json(const json& j);
};

// Exact-string facet filters; `covers` keeps descriptors whose time range
// contains the requested years.
struct CatalogQuery {
    std::optional<std::string> activity;
    std::optional<std::string> experiment;
    std::optional<std::string> source_model;
    std::optional<std::string> ensemble_member;
    std::optional<std::string> variable;
    std::optional<Frequency> frequency;
    std::optional<std::string> units;
    std::optional<numerics::YearRange> covers;
    std::size_t limit = 1000;

    bool has_facet() const;
    bool matches(const DatasetDescriptor& d) const;

    json to_json() const;
    static CatalogQuery from_json(const json& j);
};

struct RowDiagnostic {
    std::size_t line = 0;
    std::string message;
};

class Catalog {
public:
    // Every row is validated. Rejected rows are reported through rejects();
    // unless `allow_rejects`, any reject raises invariant_violation naming the
    // offending lines. A missing or unparsable index raises parse_error.
    static Catalog load(const fs::path& index, fs::path data_root, bool allow_rejects = false);
    static Catalog from_descriptors(std::vector<DatasetDescriptor> rows, fs::path data_root);

    // Matches ordered by (experiment, source_model, ensemble_member), with
    // remaining fields as a final tie-break. Raises empty_query without facets.
    std::vector<DatasetDescriptor> query(const CatalogQuery& q) const;

    // Existing regular file under the data root, else missing_file.
    fs::path resolve(const DatasetDescriptor& d) const;

    const std::vector<DatasetDescriptor>& all() const { return rows_; }
    const std::vector<RowDiagnostic>& rejects() const { return rejects_; }
    const fs::path& data_root() const { return root_; }

    // Facet values on offer, for planner prompts: {"experiment": [...], ...}.
    json facet_summary() const;

private:
    std::vector<DatasetDescriptor> rows_;
    std::vector<RowDiagnostic> rejects_;
    fs::path root_;
};

// Deterministic synthetic field parameters for a catalog row.
numerics::SyntheticSpec fixture_spec_for(const DatasetDescriptor& d);

// Writes a Grid-JSON file for every catalog row (skipping existing files
// unless `overwrite`). Returns the number of files written.
std::size_t generate_fixture_data(const Catalog& catalog, bool overwrite = false);

}  // namespace climagent::catalog
