#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "climagent/run_state.hpp"

namespace climagent::service {

// Directory per run: events.jsonl (append-only), artifacts/<sha256> and a
// scratch work/ tree. Every append is checked against the state machine.
// An empty root keeps everything in memory.
class RunStore {
public:
    explicit RunStore(fs::path root);

    const fs::path& root() const { return root_; }

    std::string create_run(const planner::UserQuery& query, const RunOptions& options,
                            std::optional<std::string> run_id = std::nullopt);

    // Appends an event without a stage change.
    Event append(const std::string& run_id, const std::string& event_type, json payload);
    // Appends a stage_changed event.
    Event transition(const std::string& run_id, Stage to, json payload = json::object());

    // Stores bytes under their digest and logs artifact_stored. Returns the digest.
    std::string put_artifact(const std::string& run_id, const std::string& name, std::string_view bytes);
    std::string read_artifact(const std::string& run_id, const std::string& name) const;

    RunState state(const std::string& run_id) const;
    std::vector<Event> events(const std::string& run_id, std::uint64_t from_seq = 1) const;
    // Blocks until the log holds an event with seq > after_seq, the run is
    // terminal, or the timeout passes. Returns true when new events exist.
    bool wait_for_events(const std::string& run_id, std::uint64_t after_seq, std::chrono::milliseconds timeout) const;

    bool has_run(const std::string& run_id) const;
    std::vector<std::string> list_runs() const;
    fs::path run_dir(const std::string& run_id) const;
    fs::path work_dir(const std::string& run_id) const;

private:
    struct Entry {
        RunState state;
        std::vector<Event> events;
        mutable std::mutex mu;
        mutable std::condition_variable cv;
    };

    std::shared_ptr<Entry> entry(const std::string& run_id) const;
    Event append_locked(Entry& e, const std::string& event_type, json payload,
                        const std::function<void(RunState&)>& peek = {});
    void load_run(const fs::path& dir);

    fs::path root_;
    mutable std::shared_mutex mu_;
    std::map<std::string, std::shared_ptr<Entry>> runs_;
};

}  // namespace climagent::service
