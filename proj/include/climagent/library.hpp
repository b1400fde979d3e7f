#pragma once

#include <cstdint>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "climagent/gateway.hpp"
#include "climagent/review.hpp"
#include "climagent/util.hpp"

// Knowledge, tool, and algorithm-template records behind one embedding index.
namespace climagent::library {

enum class Kind { plan, code_template, tool_doc };
enum class Provenance { seeded, promoted };
enum class Status { draft, validated };

std::string_view to_string(Kind k);
std::string_view to_string(Provenance p);
std::string_view to_string(Status s);
Kind kind_from_string(std::string_view s);
Provenance provenance_from_string(std::string_view s);
Status status_from_string(std::string_view s);

// A query-code-result triplet.
struct TemplateRecord {
    std::string query_text;
    std::string code;
    std::string result_digest;
    std::string runtime_tag;

    void validate() const;  // all triplet parts present
    json to_json() const;
    static TemplateRecord from_json(const json& j);
};

struct ToolParam {
    std::string name;
    std::string type;   // "number" | "integer" | "string" | "year_range"
    std::string units;  // may be empty
};

struct ToolManifest {
    std::string name;
    std::string entrypoint;  // executable or script path
    std::string subcommand;  // optional first argument to the entrypoint
    std::string runtime_tag;
    std::vector<ToolParam> params;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string description;

    // Entrypoint exists (relative paths resolve against `base`) and param
    // names are unique; invariant_violation otherwise.
    void validate(const fs::path& base = {}) const;
    json to_json() const;
    static ToolManifest from_json(const json& j);
};

struct KnowledgeRecord {
    std::string id;
    Kind kind = Kind::plan;
    std::string summary;
    gateway::Embedding embedding;  // empty means "compute on index"
    json payload = json::object();
    Provenance provenance = Provenance::seeded;
    Status status = Status::validated;
    std::string run_id;  // required for promoted records
    std::string created_at;
    std::uint64_t sequence = 0;  // insertion order, assigned by the library

    json to_json() const;
    static KnowledgeRecord from_json(const json& j);
};

struct ScoredRecord {
    KnowledgeRecord record;
    double score = 0.0;
};

struct Filter {
    std::optional<Kind> kind;
    std::optional<Status> status;

    bool accepts(const KnowledgeRecord& r) const {
        return (!kind || r.kind == *kind) && (!status || r.status == *status);
    }
};

class Library {
public:
    // `dir` empty keeps the library in memory only. Otherwise records are
    // appended to <dir>/records.jsonl and a full snapshot is written every
    // `snapshot_every` appends.
    Library(const gateway::Gateway& gateway, fs::path dir = {}, std::size_t snapshot_every = 100);

    std::string index_record(KnowledgeRecord record, bool replace = false);

    // Top-k by cosine similarity, ties broken by ascending id.
    std::vector<ScoredRecord> retrieve(const gateway::Embedding& query, int k, Filter filter = {}) const;
    std::vector<ScoredRecord> retrieve_text(std::string_view text, int k, Filter filter = {}) const;

    // Indexes the triplet as a validated, promoted template. `id` defaults to a
    // digest of (run_ref, query_text) so re-promotion is idempotent.
    std::string promote_template(const TemplateRecord& triplet, const ReviewDecision& approval,
                                 std::optional<std::string> id = std::nullopt);
    // Stores the triplet as a draft awaiting human approval.
    std::string queue_draft(const TemplateRecord& triplet, const std::string& run_ref,
                            std::optional<std::string> id = std::nullopt);

    std::vector<KnowledgeRecord> list_records(std::optional<Kind> kind = std::nullopt,
                                              std::optional<Status> status = std::nullopt) const;
    std::optional<KnowledgeRecord> get(const std::string& id) const;
    std::size_t size() const;

    // Loads seed records (JSON lines with id, kind, summary, payload) as
    // seeded + validated. Returns the number indexed.
    std::size_t seed_from(const fs::path& jsonl, const fs::path& tool_base = {});

    void snapshot();

    static std::string template_id(const std::string& run_ref, const std::string& query_text);

private:
    void load();
    std::string index_locked(KnowledgeRecord record, bool replace, bool persist);
    void persist_locked(const KnowledgeRecord& record);
    void snapshot_locked();

    const gateway::Gateway& gateway_;
    fs::path dir_;
    std::size_t snapshot_every_;
    mutable std::shared_mutex mu_;
    std::vector<KnowledgeRecord> records_;  // insertion order
    std::uint64_t next_sequence_ = 1;
    std::size_t log_lines_ = 0;
    std::size_t since_snapshot_ = 0;
};

}  // namespace climagent::library
