#pragma once

#include <memory>
#include <string>
#include <vector>

#include "climagent/agent.hpp"
#include "climagent/catalog.hpp"
#include "climagent/error.hpp"
#include "climagent/library.hpp"
#include "climagent/review.hpp"

// The planning module: requirement summary, retrieval, candidate plans,
// merge and human review.
namespace climagent::planner {

inline constexpr int kPlanSchemaVersion = 1;

struct Document {
    std::string title;
    std::string body;
};

struct UserQuery {
    std::string text;
    std::vector<Document> attached_documents;

    void validate() const;
    json to_json() const;
    static UserQuery from_json(const json& j);
};

struct DatasetSelector {
    std::string label;
    catalog::CatalogQuery query;
};

// op is one of regrid, convert_units, subset_time, subset_region, statistic.
// `dataset` names a selector label, or "*" for every dataset.
struct PreprocessStep {
    std::string dataset = "*";
    std::string op;
    json params = json::object();
};

struct DiagnosticTask {
    std::string id;
    std::string description;
    std::string method;
    std::vector<std::string> inputs;  // dataset labels or ids of upstream tasks
    std::vector<std::string> outputs;
    std::vector<std::string> depends_on;
};

struct FigureSpec {
    std::string task;
    std::string kind;
    std::string title;
};

// Shared shape of candidate and final plans; see docs/plan_schema.md.
struct Plan {
    int schema_version = kPlanSchemaVersion;
    std::string objective;
    std::vector<DatasetSelector> datasets;
    std::vector<PreprocessStep> preprocessing;
    std::vector<DiagnosticTask> diagnostics;
    std::vector<FigureSpec> visualizations;
    std::vector<std::string> deliverables;

    const DiagnosticTask* find_task(const std::string& id) const;
    bool has_figure(const std::string& task_id) const;

    json to_json() const;
    // Throws parse_error on shape/type problems (not on plan invariants).
    static Plan from_json(const json& j);
};

bool operator==(const Plan& a, const Plan& b);

enum class ViolationKind {
    unsupported_schema,
    empty_objective,
    no_diagnostics,
    duplicate_task_id,
    duplicate_dataset_label,
    unknown_dependency,
    dependency_cycle,
    unknown_input,
    unknown_dataset_label,
    unknown_preprocess_op,
    unresolvable_dataset,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::string detail;
};

// Empty iff every plan invariant holds, including catalog resolvability of
// every dataset selector.
std::vector<Violation> validate_plan(const Plan& plan, const catalog::Catalog& catalog);
std::string describe(const std::vector<Violation>& violations);

// Extracts and parses the first ```json block (or the whole text).
Plan parse_plan_text(const std::string& text);

struct WebBlock {
    std::string title;
    std::string url;
    std::string text;
};

class WebFetcher {
public:
    virtual ~WebFetcher() = default;
    virtual std::vector<WebBlock> fetch(const std::string& query) const = 0;
};

// Offline fixtures: <dir>/web.json maps query strings to block lists; the
// "*" entry, when present, answers every other query.
class OfflineFetcher : public WebFetcher {
public:
    explicit OfflineFetcher(fs::path dir);
    std::vector<WebBlock> fetch(const std::string& query) const override;

private:
    json index_ = json::object();
};

struct RetrievedContext {
    std::vector<library::ScoredRecord> plans;
    std::vector<WebBlock> web;
    json catalog_facets = json::object();
    std::vector<std::string> reviewer_comments;
};

struct PlannerConfig {
    int candidate_count = 3;
    double temperature = 0.7;
    int retrieve_k = 3;
    bool parallel = true;
};

enum class ReviewAction { approved, rejected };

struct ReviewOutcome {
    ReviewAction action = ReviewAction::approved;
    Plan plan;
    std::string comment;
};

class Planner {
public:
    Planner(const AgentClient& agent, const library::Library& library, const catalog::Catalog& catalog,
            const WebFetcher* fetcher, PlannerConfig config = {});

    std::string summarize_requirements(const UserQuery& query) const;
    RetrievedContext gather_context(const std::string& summary,
                                    const std::vector<std::string>& reviewer_comments) const;
    // Candidate i is sampled with seed i+1. Each gets one re-prompt on invalid
    // output before plan_parse_failure.
    std::vector<Plan> generate_candidates(const std::string& summary, const RetrievedContext& context,
                                          int n) const;
    // Identical candidates collapse; a single distinct plan bypasses the model.
    Plan merge_plans(const std::vector<Plan>& candidates) const;
    ReviewOutcome apply_review(const Plan& plan, const ReviewDecision& decision) const;

    // summarize -> retrieve -> candidates -> merge.
    Plan plan(const UserQuery& query, const std::vector<std::string>& reviewer_comments = {}) const;

    static std::string candidate_prompt(const std::string& summary, const RetrievedContext& context);

private:
    Plan request_plan(const std::string& agent, const std::string& role, const std::string& user, double temperature,
                      std::int64_t seed, Errc failure, const std::string& what) const;

    const AgentClient& agent_;
    const library::Library& library_;
    const catalog::Catalog& catalog_;
    const WebFetcher* fetcher_;
    PlannerConfig config_;
};

}  // namespace climagent::planner
