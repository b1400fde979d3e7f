#include "climagent/run_store.hpp"

#include <fstream>
#include <random>

#include "climagent/error.hpp"

namespace climagent::service {

namespace {

std::string new_run_id() {
    static std::mutex mu;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mu);
    char buf[32];
    std::snprintf(buf, sizeof buf, "run-%012llx", static_cast<unsigned long long>(rng() & 0xffffffffffffull));
    return buf;
}

}  // namespace

RunStore::RunStore(fs::path root) : root_(std::move(root)) {
    if (root_.empty()) return;
    std::error_code ec;
    fs::create_directories(root_ / "runs", ec);
    if (ec) fail(Errc::persistence_failure, "cannot create run store at " + root_.string() + ": " + ec.message());
    for (const auto& d : fs::directory_iterator(root_ / "runs"))
        if (d.is_directory() && fs::exists(d.path() / "events.jsonl")) load_run(d.path());
}

void RunStore::load_run(const fs::path& dir) {
    auto e = std::make_shared<Entry>();
    std::ifstream in(dir / "events.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        Event ev;
        try {
            ev = Event::from_json(json::parse(line));
        } catch (const std::exception&) {
            break;  // torn tail from a crash; everything before it is consistent
        }
        apply_event(e->state, ev);
        e->events.push_back(std::move(ev));
    }
    if (e->events.empty()) return;
    runs_[e->state.run_id] = e;
}

fs::path RunStore::run_dir(const std::string& run_id) const {
    if (root_.empty()) return {};
    return root_ / "runs" / run_id;
}

fs::path RunStore::work_dir(const std::string& run_id) const {
    if (root_.empty()) return fs::temp_directory_path() / "climagent" / run_id / "work";
    return run_dir(run_id) / "work";
}

std::shared_ptr<RunStore::Entry> RunStore::entry(const std::string& run_id) const {
    std::shared_lock lock(mu_);
    auto it = runs_.find(run_id);
    if (it == runs_.end()) fail(Errc::unknown_run, "no run " + run_id);
    return it->second;
}

bool RunStore::has_run(const std::string& run_id) const {
    std::shared_lock lock(mu_);
    return runs_.count(run_id) > 0;
}

std::vector<std::string> RunStore::list_runs() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> ids;
    for (const auto& [id, e] : runs_) ids.push_back(id);
    return ids;
}

Event RunStore::append_locked(Entry& e, const std::string& event_type, json payload,
                              const std::function<void(RunState&)>& peek) {
    Event ev;
    ev.seq = e.state.last_seq + 1;
    ev.timestamp = now_iso8601();
    ev.event_type = event_type;
    ev.payload = std::move(payload);
    // Work out the resulting stage label, then validate the complete event.
    RunState probe = e.state;
    if (peek) peek(probe);
    ev.stage = probe.stage_label();
    RunState next = e.state;
    apply_event(next, ev);
    if (!root_.empty()) {
        try {
            append_line(run_dir(next.run_id) / "events.jsonl", ev.to_json().dump());
        } catch (const std::filesystem::filesystem_error& fe) {
            fail(Errc::persistence_failure, fe.what());
        }
    }
    e.state = std::move(next);
    e.events.push_back(ev);
    e.cv.notify_all();
    return ev;
}

std::string RunStore::create_run(const planner::UserQuery& query, const RunOptions& options,
                                 std::optional<std::string> run_id) {
    query.validate();
    auto id = run_id.value_or(new_run_id());
    auto e = std::make_shared<Entry>();
    {
        std::unique_lock lock(mu_);
        if (runs_.count(id)) fail(Errc::invalid_argument, "run " + id + " already exists");
        runs_[id] = e;
    }
    try {
        if (!root_.empty()) {
            std::error_code ec;
            fs::create_directories(run_dir(id) / "artifacts", ec);
            if (ec) fail(Errc::persistence_failure, "cannot create " + run_dir(id).string() + ": " + ec.message());
        }
        std::lock_guard lock(e->mu);
        append_locked(*e, "run_created", {{"run_id", id}, {"query", query.to_json()}, {"options", options.to_json()}},
                      [](RunState&) {});
    } catch (...) {
        std::unique_lock lock(mu_);
        runs_.erase(id);
        throw;
    }
    return id;
}

Event RunStore::append(const std::string& run_id, const std::string& event_type, json payload) {
    if (event_type == "stage_changed" || event_type == "run_created")
        fail(Errc::invalid_argument, "use transition()/create_run() for " + event_type);
    auto e = entry(run_id);
    std::lock_guard lock(e->mu);
    return append_locked(*e, event_type, std::move(payload));
}

Event RunStore::transition(const std::string& run_id, Stage to, json payload) {
    auto e = entry(run_id);
    std::lock_guard lock(e->mu);
    const Stage from = e->state.stage;
    if (!legal_transition(from, to))
        fail(Errc::illegal_transition,
             "illegal transition " + std::string(to_string(from)) + " -> " + std::string(to_string(to)));
    payload["from"] = std::string(to_string(from));
    payload["to"] = std::string(to_string(to));
    return append_locked(*e, "stage_changed", std::move(payload), [&](RunState& s) {
        if (to == Stage::failed) s.failed_at = s.stage;
        s.stage = to;
    });
}

std::string RunStore::put_artifact(const std::string& run_id, const std::string& name, std::string_view bytes) {
    auto digest = sha256_hex(bytes);
    auto e = entry(run_id);
    std::lock_guard lock(e->mu);
    if (!root_.empty()) {
        auto path = run_dir(run_id) / "artifacts" / digest;
        if (!fs::exists(path)) write_file_atomic(path, bytes);
    }
    json payload = {{"name", name}, {"digest", digest}, {"size", bytes.size()}};
    if (root_.empty()) payload["body"] = std::string(bytes);  // in-memory stores keep bodies in the log
    append_locked(*e, "artifact_stored", std::move(payload));
    return digest;
}

std::string RunStore::read_artifact(const std::string& run_id, const std::string& name) const {
    auto e = entry(run_id);
    std::lock_guard lock(e->mu);
    auto it = e->state.artifacts.find(name);
    if (it == e->state.artifacts.end()) fail(Errc::missing_file, "run " + run_id + " has no artifact " + name);
    if (root_.empty()) {
        for (auto ev = e->events.rbegin(); ev != e->events.rend(); ++ev)
            if (ev->event_type == "artifact_stored" && ev->payload.value("name", "") == name)
                return ev->payload.value("body", "");
    }
    return read_file(run_dir(run_id) / "artifacts" / it->second);
}

RunState RunStore::state(const std::string& run_id) const {
    auto e = entry(run_id);
    std::lock_guard lock(e->mu);
    return e->state;
}

std::vector<Event> RunStore::events(const std::string& run_id, std::uint64_t from_seq) const {
    auto e = entry(run_id);
    std::lock_guard lock(e->mu);
    std::vector<Event> out;
    for (const auto& ev : e->events)
        if (ev.seq >= from_seq) out.push_back(ev);
    return out;
}

bool RunStore::wait_for_events(const std::string& run_id, std::uint64_t after_seq,
                               std::chrono::milliseconds timeout) const {
    auto e = entry(run_id);
    std::unique_lock lock(e->mu);
    e->cv.wait_for(lock, timeout, [&] { return e->state.last_seq > after_seq || is_terminal(e->state.stage); });
    return e->state.last_seq > after_seq;
}

}  // namespace climagent::service
