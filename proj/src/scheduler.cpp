#include "climagent/scheduler.hpp"

#include <condition_variable>
#include <deque>
#include <mutex>
#include <set>
#include <thread>

namespace climagent::lab {

std::string_view to_string(TaskStatus s) {
    switch (s) {
        case TaskStatus::validated: return "validated";
        case TaskStatus::failed: return "failed";
        case TaskStatus::skipped: return "skipped";
    }
    return "skipped";
}

bool ScheduleResult::all_validated() const {
    for (const auto& [id, r] : reports)
        if (r.status != TaskStatus::validated) return false;
    return true;
}

ScheduleResult schedule_run(const TaskGraph& graph, const TaskRunner& runner, int worker_count,
                            const EventSink& sink) {
    if (worker_count < 1) fail(Errc::invalid_argument, "worker_count must be >= 1");
    ScheduleResult result;
    std::mutex mu;
    std::condition_variable cv;
    std::map<std::string, int> pending_deps;
    std::map<std::string, std::vector<std::string>> dependents;
    std::set<std::string> settled;
    std::deque<std::string> ready;
    std::size_t running = 0;

    auto emit = [&](const std::string& type, const json& payload) {
        if (sink) sink(type, payload);
    };

    for (const auto& id : graph.topo_order) pending_deps[id] = 0;
    for (const auto& [from, to] : graph.edges) {
        ++pending_deps[to];
        dependents[from].push_back(to);
    }
    for (const auto& id : graph.topo_order)
        if (pending_deps[id] == 0) ready.push_back(id);

    // Caller holds `mu`.
    std::function<void(const std::string&, const std::string&)> skip = [&](const std::string& id,
                                                                            const std::string& because) {
        if (settled.count(id)) return;
        settled.insert(id);
        TaskReport r;
        r.task_id = id;
        r.status = TaskStatus::skipped;
        r.error = "dependency " + because + " did not validate";
        result.reports[id] = r;
        emit("task_skipped", {{"task", id}, {"because", because}});
        for (const auto& d : dependents[id]) skip(d, id);
    };

    auto worker = [&] {
        std::unique_lock lock(mu);
        for (;;) {
            cv.wait(lock, [&] { return !ready.empty() || settled.size() == graph.topo_order.size() ||
                                       (ready.empty() && running == 0); });
            if (ready.empty()) return;
            auto id = ready.front();
            ready.pop_front();
            ++running;
            result.start_order.push_back(id);
            emit("task_started", {{"task", id}});
            lock.unlock();

            TaskReport report;
            try {
                report = runner(graph.node(id));
                report.task_id = id;
            } catch (const std::exception& e) {
                report.task_id = id;
                report.status = TaskStatus::failed;
                report.error = e.what();
            }

            lock.lock();
            --running;
            settled.insert(id);
            result.finish_order.push_back(id);
            emit("task_finished",
                 {{"task", id}, {"status", std::string(to_string(report.status))}, {"digest", report.digest},
                  {"error", report.error}});
            const bool ok = report.status == TaskStatus::validated;
            if (!ok && !result.first_failure) result.first_failure = id;
            result.reports[id] = std::move(report);
            for (const auto& d : dependents[id]) {
                if (!ok) {
                    skip(d, id);
                } else if (--pending_deps[d] == 0 && !settled.count(d)) {
                    ready.push_back(d);
                }
            }
            cv.notify_all();
        }
    };

    std::vector<std::thread> pool;
    for (int i = 0; i < worker_count; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return result;
}

}  // namespace climagent::lab
