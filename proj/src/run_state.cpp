#include "climagent/run_state.hpp"

#include "climagent/error.hpp"

namespace climagent::service {

namespace {

constexpr std::pair<Stage, std::string_view> kNames[] = {
    {Stage::created, "created"},       {Stage::planning, "planning"},         {Stage::awaiting_review, "awaiting_review"},
    {Stage::executing, "executing"},   {Stage::validating, "validating"},     {Stage::synthesizing, "synthesizing"},
    {Stage::completed, "completed"},   {Stage::failed, "failed"},             {Stage::cancelled, "cancelled"},
};

constexpr std::pair<Stage, std::string_view> kPhases[] = {
    {Stage::created, "creation"},    {Stage::planning, "planning"},     {Stage::awaiting_review, "review"},
    {Stage::executing, "execution"}, {Stage::validating, "validation"}, {Stage::synthesizing, "synthesis"},
};

}  // namespace

std::string_view to_string(Stage s) {
    for (const auto& [st, name] : kNames)
        if (st == s) return name;
    return "unknown";
}

Stage stage_from_string(std::string_view s) {
    for (const auto& [st, name] : kNames)
        if (name == s) return st;
    fail(Errc::invalid_argument, "unknown stage '" + std::string(s) + "'");
}

std::string_view phase_name(Stage s) {
    for (const auto& [st, name] : kPhases)
        if (st == s) return name;
    return to_string(s);
}

bool is_terminal(Stage s) { return s == Stage::completed || s == Stage::failed || s == Stage::cancelled; }
bool is_active(Stage s) { return !is_terminal(s); }

bool legal_transition(Stage from, Stage to) {
    if (is_terminal(from)) return false;
    if (to == Stage::failed || to == Stage::cancelled) return true;
    switch (from) {
        case Stage::created: return to == Stage::planning;
        case Stage::planning: return to == Stage::awaiting_review;
        case Stage::awaiting_review: return to == Stage::executing || to == Stage::planning;
        case Stage::executing: return to == Stage::validating;
        case Stage::validating: return to == Stage::synthesizing;
        case Stage::synthesizing: return to == Stage::completed;
        default: return false;
    }
}

json RunOptions::to_json() const {
    return {{"auto_approve", auto_approve}, {"worker_count", worker_count}, {"expert_count", expert_count},
            {"topic", topic}};
}

RunOptions RunOptions::from_json(const json& j) {
    RunOptions o;
    o.auto_approve = j.value("auto_approve", o.auto_approve);
    o.worker_count = j.value("worker_count", o.worker_count);
    o.expert_count = j.value("expert_count", o.expert_count);
    o.topic = j.value("topic", o.topic);
    if (o.worker_count < 1) fail(Errc::invalid_argument, "worker_count must be >= 1");
    if (o.expert_count < 1) fail(Errc::invalid_argument, "expert_count must be >= 1");
    return o;
}

json Event::to_json() const {
    return {{"seq", seq}, {"timestamp", timestamp}, {"stage", stage}, {"event_type", event_type}, {"payload", payload}};
}

Event Event::from_json(const json& j) {
    Event e;
    try {
        e.seq = j.at("seq").get<std::uint64_t>();
        e.timestamp = j.value("timestamp", "");
        e.stage = j.at("stage").get<std::string>();
        e.event_type = j.at("event_type").get<std::string>();
        e.payload = j.value("payload", json::object());
    } catch (const json::exception& ex) {
        fail(Errc::parse_error, std::string("event: ") + ex.what());
    }
    return e;
}

std::string RunState::stage_label() const {
    if (stage == Stage::failed && failed_at) return "failed(" + std::string(phase_name(*failed_at)) + ")";
    return std::string(to_string(stage));
}

json RunState::to_json() const {
    json tasks_j = json::object();
    for (const auto& [id, t] : tasks) {
        json tj = {{"status", t.status}, {"summary", t.summary}};
        if (t.verdict) tj["verdict"] = *t.verdict;
        tasks_j[id] = tj;
    }
    json j = {{"run_id", run_id},
              {"stage", stage_label()},
              {"query", query.to_json()},
              {"options", options.to_json()},
              {"reviewer_comments", reviewer_comments},
              {"artifacts", artifacts},
              {"tasks", tasks_j},
              {"error", error},
              {"created_at", created_at},
              {"updated_at", updated_at},
              {"last_seq", last_seq}};
    j["proposed_plan"] = proposed_plan ? proposed_plan->to_json() : json(nullptr);
    j["plan"] = plan ? plan->to_json() : json(nullptr);
    return j;
}

void apply_event(RunState& s, const Event& e) {
    if (e.seq != s.last_seq + 1)
        fail(Errc::illegal_transition,
             "event seq " + std::to_string(e.seq) + " does not follow " + std::to_string(s.last_seq));
    RunState next = s;
    const auto& p = e.payload;
    if (e.event_type == "run_created") {
        if (s.last_seq != 0) fail(Errc::illegal_transition, "run_created must be the first event");
        next.run_id = p.value("run_id", "");
        next.query = planner::UserQuery::from_json(p.value("query", json::object()));
        next.options = RunOptions::from_json(p.value("options", json::object()));
        next.created_at = e.timestamp;
        next.stage = Stage::created;
    } else if (s.last_seq == 0) {
        fail(Errc::illegal_transition, "first event must be run_created");
    } else if (e.event_type == "stage_changed") {
        auto to = stage_from_string(p.at("to").get<std::string>());
        if (!legal_transition(s.stage, to))
            fail(Errc::illegal_transition,
                 "illegal transition " + std::string(to_string(s.stage)) + " -> " + std::string(to_string(to)));
        if (to == Stage::failed) {
            next.failed_at = s.stage;
            next.error = p.value("error", "");
        }
        if (to == Stage::planning && s.stage == Stage::awaiting_review) {
            next.proposed_plan.reset();
            if (auto c = p.value("comment", ""); !c.empty()) next.reviewer_comments.push_back(c);
        }
        next.stage = to;
    } else if (e.event_type == "plan_proposed") {
        next.proposed_plan = planner::Plan::from_json(p.at("plan"));
    } else if (e.event_type == "plan_approved") {
        next.plan = planner::Plan::from_json(p.at("plan"));
    } else if (e.event_type == "artifact_stored") {
        next.artifacts[p.at("name").get<std::string>()] = p.at("digest").get<std::string>();
    } else if (e.event_type == "task_result") {
        auto& t = next.tasks[p.at("task").get<std::string>()];
        t.status = p.value("status", "");
        t.summary = p;
    } else if (e.event_type == "verdict_recorded") {
        next.tasks[p.at("task").get<std::string>()].verdict = p;
    }
    if (e.stage != next.stage_label())
        fail(Errc::illegal_transition, "event " + std::to_string(e.seq) + " claims stage " + e.stage + " but run is " +
                                           next.stage_label());
    next.last_seq = e.seq;
    next.updated_at = e.timestamp;
    s = std::move(next);
}

RunState replay(const std::vector<Event>& events) {
    RunState s;
    for (const auto& e : events) apply_event(s, e);
    return s;
}

}  // namespace climagent::service
