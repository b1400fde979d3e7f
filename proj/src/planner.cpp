#include "climagent/planner.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include "climagent/error.hpp"

namespace climagent::planner {

void UserQuery::validate() const {
    if (trim(text).empty()) fail(Errc::invalid_argument, "query text is empty");
}

json UserQuery::to_json() const {
    json docs = json::array();
    for (const auto& d : attached_documents) docs.push_back({{"title", d.title}, {"body", d.body}});
    return {{"text", text}, {"attached_documents", docs}};
}

UserQuery UserQuery::from_json(const json& j) {
    UserQuery q;
    q.text = j.value("text", "");
    for (const auto& d : j.value("attached_documents", json::array()))
        q.attached_documents.push_back({d.value("title", ""), d.value("body", "")});
    return q;
}

const DiagnosticTask* Plan::find_task(const std::string& id) const {
    for (const auto& t : diagnostics)
        if (t.id == id) return &t;
    return nullptr;
}

bool Plan::has_figure(const std::string& task_id) const {
    return std::any_of(visualizations.begin(), visualizations.end(),
                       [&](const FigureSpec& f) { return f.task == task_id; });
}

json Plan::to_json() const {
    json ds = json::array();
    for (const auto& d : datasets) ds.push_back({{"label", d.label}, {"query", d.query.to_json()}});
    json steps = json::array();
    for (const auto& s : preprocessing) steps.push_back({{"dataset", s.dataset}, {"op", s.op}, {"params", s.params}});
    json tasks = json::array();
    for (const auto& t : diagnostics) {
        tasks.push_back({{"id", t.id},
                         {"description", t.description},
                         {"method", t.method},
                         {"inputs", t.inputs},
                         {"outputs", t.outputs},
                         {"depends_on", t.depends_on}});
    }
    json figs = json::array();
    for (const auto& f : visualizations) figs.push_back({{"task", f.task}, {"kind", f.kind}, {"title", f.title}});
    return {{"schema_version", schema_version}, {"objective", objective}, {"datasets", ds},
            {"preprocessing", steps},           {"diagnostics", tasks},   {"visualizations", figs},
            {"deliverables", deliverables}};
}

Plan Plan::from_json(const json& j) {
    try {
        if (!j.is_object()) fail(Errc::parse_error, "plan must be a JSON object");
        Plan p;
        p.schema_version = j.at("schema_version").get<int>();
        p.objective = j.at("objective").get<std::string>();
        for (const auto& d : j.at("datasets"))
            p.datasets.push_back({d.at("label").get<std::string>(), catalog::CatalogQuery::from_json(d.at("query"))});
        for (const auto& s : j.value("preprocessing", json::array()))
            p.preprocessing.push_back(
                {s.value("dataset", "*"), s.at("op").get<std::string>(), s.value("params", json::object())});
        for (const auto& t : j.at("diagnostics")) {
            DiagnosticTask task;
            task.id = t.at("id").get<std::string>();
            task.description = t.at("description").get<std::string>();
            task.method = t.value("method", "");
            task.inputs = t.value("inputs", std::vector<std::string>{});
            task.outputs = t.value("outputs", std::vector<std::string>{});
            task.depends_on = t.value("depends_on", std::vector<std::string>{});
            p.diagnostics.push_back(std::move(task));
        }
        for (const auto& f : j.value("visualizations", json::array()))
            p.visualizations.push_back({f.at("task").get<std::string>(), f.value("kind", ""), f.value("title", "")});
        p.deliverables = j.value("deliverables", std::vector<std::string>{});
        return p;
    } catch (const json::exception& e) {
        fail(Errc::parse_error, std::string("plan document: ") + e.what());
    }
}

bool operator==(const Plan& a, const Plan& b) { return a.to_json() == b.to_json(); }

std::string_view to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::unsupported_schema: return "UnsupportedSchema";
        case ViolationKind::empty_objective: return "EmptyObjective";
        case ViolationKind::no_diagnostics: return "NoDiagnostics";
        case ViolationKind::duplicate_task_id: return "DuplicateTaskId";
        case ViolationKind::duplicate_dataset_label: return "DuplicateDatasetLabel";
        case ViolationKind::unknown_dependency: return "UnknownDependency";
        case ViolationKind::dependency_cycle: return "DependencyCycle";
        case ViolationKind::unknown_input: return "UnknownInput";
        case ViolationKind::unknown_dataset_label: return "UnknownDatasetLabel";
        case ViolationKind::unknown_preprocess_op: return "UnknownPreprocessOp";
        case ViolationKind::unresolvable_dataset: return "UnresolvableDataset";
    }
    return "Unknown";
}

namespace {

bool has_cycle(const Plan& plan, std::string& where) {
    std::map<std::string, const DiagnosticTask*> by_id;
    for (const auto& t : plan.diagnostics) by_id.emplace(t.id, &t);
    std::map<std::string, int> colour;  // 0 white, 1 grey, 2 black
    std::function<bool(const std::string&)> visit = [&](const std::string& id) {
        colour[id] = 1;
        auto it = by_id.find(id);
        if (it != by_id.end()) {
            for (const auto& dep : it->second->depends_on) {
                if (!by_id.count(dep)) continue;
                if (colour[dep] == 1) {
                    where = id + " -> " + dep;
                    return true;
                }
                if (colour[dep] == 0 && visit(dep)) return true;
            }
        }
        colour[id] = 2;
        return false;
    };
    for (const auto& t : plan.diagnostics)
        if (colour[t.id] == 0 && visit(t.id)) return true;
    return false;
}

}  // namespace

std::vector<Violation> validate_plan(const Plan& plan, const catalog::Catalog& catalog) {
    std::vector<Violation> v;
    if (plan.schema_version != kPlanSchemaVersion)
        v.push_back({ViolationKind::unsupported_schema, std::to_string(plan.schema_version)});
    if (trim(plan.objective).empty()) v.push_back({ViolationKind::empty_objective, ""});
    if (plan.diagnostics.empty()) v.push_back({ViolationKind::no_diagnostics, ""});

    std::set<std::string> labels;
    for (const auto& d : plan.datasets) {
        if (!labels.insert(d.label).second) v.push_back({ViolationKind::duplicate_dataset_label, d.label});
        bool resolvable = false;
        if (d.query.has_facet()) resolvable = !catalog.query(d.query).empty();
        if (!resolvable) v.push_back({ViolationKind::unresolvable_dataset, d.label + " " + d.query.to_json().dump()});
    }

    std::set<std::string> ids;
    for (const auto& t : plan.diagnostics)
        if (!ids.insert(t.id).second) v.push_back({ViolationKind::duplicate_task_id, t.id});

    for (const auto& t : plan.diagnostics) {
        for (const auto& dep : t.depends_on)
            if (!ids.count(dep)) v.push_back({ViolationKind::unknown_dependency, t.id + " -> " + dep});
        for (const auto& in : t.inputs) {
            bool upstream = std::find(t.depends_on.begin(), t.depends_on.end(), in) != t.depends_on.end();
            if (!labels.count(in) && !upstream) v.push_back({ViolationKind::unknown_input, t.id + " <- " + in});
        }
    }
    std::string where;
    if (has_cycle(plan, where)) v.push_back({ViolationKind::dependency_cycle, where});

    for (const auto& s : plan.preprocessing) {
        if (s.op.empty()) v.push_back({ViolationKind::unknown_preprocess_op, "empty op"});
        if (s.dataset != "*" && !labels.count(s.dataset))
            v.push_back({ViolationKind::unknown_dataset_label, s.op + " on " + s.dataset});
    }
    for (const auto& f : plan.visualizations)
        if (!ids.count(f.task)) v.push_back({ViolationKind::unknown_input, "figure for unknown task " + f.task});
    return v;
}

std::string describe(const std::vector<Violation>& violations) {
    std::string out;
    for (const auto& x : violations) {
        if (!out.empty()) out += "; ";
        out += std::string(to_string(x.kind));
        if (!x.detail.empty()) out += " (" + x.detail + ")";
    }
    return out;
}

Plan parse_plan_text(const std::string& text) {
    auto body = extract_fenced(text, {"json"}).value_or(text);
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::parse_error& e) {
        fail(Errc::parse_error, std::string("plan is not valid JSON: ") + e.what());
    }
    return Plan::from_json(doc);
}

OfflineFetcher::OfflineFetcher(fs::path dir) {
    auto path = dir / "web.json";
    if (fs::exists(path)) index_ = read_json_file(path);
}

std::vector<WebBlock> OfflineFetcher::fetch(const std::string& query) const {
    const json* hit = nullptr;
    if (index_.contains(query)) {
        hit = &index_[query];
    } else if (index_.contains("*")) {
        hit = &index_["*"];
    }
    std::vector<WebBlock> blocks;
    if (!hit) return blocks;
    for (const auto& b : *hit) blocks.push_back({b.value("title", ""), b.value("url", ""), b.value("text", "")});
    return blocks;
}

namespace {

constexpr const char* kSummarizeRole =
    "You condense a climate-analysis request into a short requirement summary naming the variables, "
    "datasets, periods and comparison targets.";

constexpr const char* kCandidateRole =
    "You design climate-analysis plans. Reply with exactly one ```json block holding a plan document "
    "with schema_version 1.";

constexpr const char* kMergeRole =
    "You merge several candidate analysis plans into one comprehensive plan. Keep the union of the "
    "diagnostics with unique ids. Reply with exactly one ```json block.";

constexpr const char* kSchemaHint =
    "Plan schema (version 1): {schema_version, objective, datasets:[{label, query:{facets..., limit}}], "
    "preprocessing:[{dataset, op: regrid|convert_units|subset_time|subset_region|statistic, params}], "
    "diagnostics:[{id, description, method, inputs, outputs, depends_on}], visualizations:[{task, kind, "
    "title}], deliverables:[...]}";

}  // namespace

Planner::Planner(const AgentClient& agent, const library::Library& library, const catalog::Catalog& catalog,
                 const WebFetcher* fetcher, PlannerConfig config)
    : agent_(agent), library_(library), catalog_(catalog), fetcher_(fetcher), config_(config) {}

std::string Planner::summarize_requirements(const UserQuery& query) const {
    query.validate();
    std::ostringstream user;
    user << "Query: " << query.text << "\n";
    if (!query.attached_documents.empty()) {
        user << "\nAttached documents:\n";
        for (const auto& d : query.attached_documents) user << "## " << d.title << "\n" << d.body << "\n";
    }
    auto resp = agent_.call(agent_messages("planner.summarize", kSummarizeRole, user.str()));
    auto summary = trim(resp.text);
    if (summary.empty()) fail(Errc::backend_failure, "requirement summary is empty");
    return summary;
}

RetrievedContext Planner::gather_context(const std::string& summary,
                                         const std::vector<std::string>& reviewer_comments) const {
    RetrievedContext ctx;
    if (library_.size() > 0)
        ctx.plans = library_.retrieve(agent_.embed(summary), config_.retrieve_k,
                                      {library::Kind::plan, library::Status::validated});
    if (fetcher_) ctx.web = fetcher_->fetch(summary);
    ctx.catalog_facets = catalog_.facet_summary();
    ctx.reviewer_comments = reviewer_comments;
    return ctx;
}

std::string Planner::candidate_prompt(const std::string& summary, const RetrievedContext& context) {
    std::ostringstream os;
    os << "Requirement summary:\n" << summary << "\n\n";
    os << "Retrieved plans:\n";
    if (context.plans.empty()) os << "(none)\n";
    for (const auto& p : context.plans) {
        char score[16];
        std::snprintf(score, sizeof score, "%.3f", p.score);
        os << "- [" << p.record.id << "] (score " << score << ") " << p.record.summary << "\n";
    }
    os << "\nWeb context:\n";
    if (context.web.empty()) os << "(none)\n";
    for (const auto& b : context.web) os << "### " << b.title << " (" << b.url << ")\n" << b.text << "\n";
    os << "\nAvailable data (catalog facets):\n" << context.catalog_facets.dump() << "\n";
    if (!context.reviewer_comments.empty()) {
        os << "\nReviewer comments:\n";
        for (const auto& c : context.reviewer_comments) os << "- " << c << "\n";
    }
    os << "\n" << kSchemaHint << "\n";
    return os.str();
}

Plan Planner::request_plan(const std::string& agent, const std::string& role, const std::string& user,
                           double temperature, std::int64_t seed, Errc failure, const std::string& what) const {
    auto messages = agent_messages(agent, role, user);
    std::string last_problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto resp = agent_.call(messages, temperature, seed);
        try {
            auto plan = parse_plan_text(resp.text);
            auto violations = validate_plan(plan, catalog_);
            if (violations.empty()) return plan;
            last_problem = describe(violations);
        } catch (const Error& e) {
            if (e.code() != Errc::parse_error && e.code() != Errc::invalid_argument) throw;
            last_problem = e.what();
        }
        messages.push_back({gateway::Role::assistant, resp.text});
        messages.push_back({gateway::Role::user, "The plan was rejected: " + last_problem +
                                                     "\nReply with a corrected plan in one ```json block."});
    }
    fail(failure, what + ": " + last_problem);
}

std::vector<Plan> Planner::generate_candidates(const std::string& summary, const RetrievedContext& context,
                                               int n) const {
    if (n < 1) fail(Errc::invalid_argument, "candidate count must be >= 1");
    const auto user = candidate_prompt(summary, context);
    auto one = [&](int i) {
        return request_plan("planner.candidate", kCandidateRole, user, config_.temperature, i + 1,
                            Errc::plan_parse_failure, "candidate " + std::to_string(i));
    };
    std::vector<Plan> plans;
    if (!config_.parallel || n == 1) {
        for (int i = 0; i < n; ++i) plans.push_back(one(i));
        return plans;
    }
    std::vector<std::future<Plan>> futures;
    for (int i = 0; i < n; ++i) futures.push_back(std::async(std::launch::async, one, i));
    std::exception_ptr first;
    for (auto& f : futures) {
        try {
            plans.push_back(f.get());
        } catch (...) {
            if (!first) first = std::current_exception();
        }
    }
    if (first) std::rethrow_exception(first);
    return plans;
}

Plan Planner::merge_plans(const std::vector<Plan>& candidates) const {
    if (candidates.empty()) fail(Errc::invalid_argument, "merge needs at least one candidate");
    std::vector<Plan> distinct;
    for (const auto& c : candidates)
        if (std::find(distinct.begin(), distinct.end(), c) == distinct.end()) distinct.push_back(c);
    if (distinct.size() == 1) return distinct.front();

    std::ostringstream user;
    user << "Objective: " << distinct.front().objective << "\n\nCandidate plans:\n";
    for (std::size_t i = 0; i < distinct.size(); ++i)
        user << "### Candidate " << i + 1 << "\n```json\n" << distinct[i].to_json().dump(2) << "\n```\n";
    return request_plan("planner.merge", kMergeRole, user.str(), 0.0, 0, Errc::merge_parse_failure, "merged plan");
}

ReviewOutcome Planner::apply_review(const Plan& plan, const ReviewDecision& decision) const {
    ReviewOutcome out;
    out.comment = decision.comment;
    if (!decision.approved) {
        out.action = ReviewAction::rejected;
        out.plan = plan;
        return out;
    }
    out.action = ReviewAction::approved;
    if (!decision.edits || decision.edits->is_null() || decision.edits->empty()) {
        out.plan = plan;
        return out;
    }
    try {
        auto patched = plan.to_json().patch(*decision.edits);
        out.plan = Plan::from_json(patched);
    } catch (const json::exception& e) {
        fail(Errc::patch_invariant_violation, std::string("patch does not apply: ") + e.what());
    } catch (const Error& e) {
        fail(Errc::patch_invariant_violation, e.what());
    }
    auto violations = validate_plan(out.plan, catalog_);
    if (!violations.empty()) fail(Errc::patch_invariant_violation, describe(violations));
    return out;
}

Plan Planner::plan(const UserQuery& query, const std::vector<std::string>& reviewer_comments) const {
    auto summary = summarize_requirements(query);
    auto context = gather_context(summary, reviewer_comments);
    auto candidates = generate_candidates(summary, context, config_.candidate_count);
    return merge_plans(candidates);
}

}  // namespace climagent::planner
