#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "climagent/agent.hpp"
#include "climagent/lab.hpp"

namespace climagent::lab {

enum class TaskStatus { validated, failed, skipped };
std::string_view to_string(TaskStatus s);

struct TaskReport {
    std::string task_id;
    TaskStatus status = TaskStatus::skipped;
    std::string digest;
    std::string error;
    std::optional<TaskOutcome> outcome;
};

// Runs one task to completion. Throwing marks the task failed.
using TaskRunner = std::function<TaskReport(const planner::DiagnosticTask&)>;

struct ScheduleResult {
    std::map<std::string, TaskReport> reports;
    std::vector<std::string> start_order;
    std::vector<std::string> finish_order;
    std::optional<std::string> first_failure;  // task id

    bool all_validated() const;
};

// Worker pool over the task graph. A task starts only once every dependency
// has validated; dependents of a failed task are skipped transitively.
// Emits task_started, task_finished and task_skipped events.
ScheduleResult schedule_run(const TaskGraph& graph, const TaskRunner& runner, int worker_count,
                            const EventSink& sink = {});

}  // namespace climagent::lab
