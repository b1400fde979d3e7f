#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "climagent/planner.hpp"
#include "climagent/util.hpp"

// Run lifecycle: stages, events and replay.
namespace climagent::service {

enum class Stage { created, planning, awaiting_review, executing, validating, synthesizing, completed, failed, cancelled };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);
// Short phase name used inside failed(...), e.g. executing -> "execution".
std::string_view phase_name(Stage s);

bool is_terminal(Stage s);
bool is_active(Stage s);
// created->planning->awaiting_review->executing->validating->synthesizing->completed,
// awaiting_review->planning, and failed/cancelled from any active stage.
bool legal_transition(Stage from, Stage to);

struct RunOptions {
    bool auto_approve = false;
    int worker_count = 2;
    int expert_count = 10;
    std::string topic;

    json to_json() const;
    static RunOptions from_json(const json& j);
};

struct Event {
    std::uint64_t seq = 0;
    std::string timestamp;
    std::string stage;  // stage label after the event, e.g. "failed(execution)"
    std::string event_type;
    json payload = json::object();

    json to_json() const;
    static Event from_json(const json& j);
};

struct TaskRecord {
    std::string status;  // validated | failed | skipped
    json summary = json::object();  // last task_finished payload
    std::optional<json> verdict;
};

struct RunState {
    std::string run_id;
    Stage stage = Stage::created;
    std::optional<Stage> failed_at;
    planner::UserQuery query;
    RunOptions options;
    std::optional<planner::Plan> proposed_plan;
    std::optional<planner::Plan> plan;  // approved
    std::vector<std::string> reviewer_comments;
    std::map<std::string, std::string> artifacts;  // name -> digest
    std::map<std::string, TaskRecord> tasks;
    std::string error;
    std::string created_at;
    std::string updated_at;
    std::uint64_t last_seq = 0;

    std::string stage_label() const;
    json to_json() const;
};

// Applies one event. Errors: illegal_transition on a gapped sequence, an
// illegal stage change or a stage label that disagrees with the transition.
void apply_event(RunState& state, const Event& event);

// Folds a whole log; the same log always yields the same state.
RunState replay(const std::vector<Event>& events);

}  // namespace climagent::service
