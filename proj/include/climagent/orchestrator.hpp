#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include "climagent/catalog.hpp"
#include "climagent/config.hpp"
#include "climagent/evalharness.hpp"
#include "climagent/gateway.hpp"
#include "climagent/lab.hpp"
#include "climagent/library.hpp"
#include "climagent/planner.hpp"
#include "climagent/run_store.hpp"
#include "climagent/synthesis.hpp"

namespace climagent::service {

struct OrchestratorConfig {
    std::string backend_id;  // empty = gateway default
    planner::PlannerConfig planner;
    lab::LabConfig lab;
    synthesis::SynthesisConfig synthesis;  // expert_count comes from the run options
};

// Drives runs through their stages on background threads. Every model call,
// execution, verdict and promotion lands in the run's event log.
class Orchestrator {
public:
    Orchestrator(RunStore& store, const gateway::Gateway& gateway, const catalog::Catalog& catalog,
                 library::Library& library, const planner::WebFetcher* web, OrchestratorConfig config);
    ~Orchestrator();

    Orchestrator(const Orchestrator&) = delete;
    Orchestrator& operator=(const Orchestrator&) = delete;

    std::string create_run(const planner::UserQuery& query, const RunOptions& options);
    // Errors: unknown_run, wrong_stage, patch_invariant_violation.
    Stage submit_review(const std::string& run_id, const ReviewDecision& decision);
    // Errors: unknown_run, unknown_task, wrong_stage.
    json submit_verdict(const std::string& run_id, const std::string& task_id, const ReviewDecision& decision);
    void cancel(const std::string& run_id);

    // Replays history from `from_seq`, then tails live events until the run
    // is terminal or `sink` returns false. Errors: unknown_run.
    void stream_events(const std::string& run_id, std::uint64_t from_seq,
                       const std::function<bool(const Event&)>& sink,
                       std::chrono::milliseconds poll = std::chrono::milliseconds(200)) const;

    // Deterministic ustar of the event log and every stored artifact.
    // Errors: unknown_run, run_active.
    std::string export_archive(const std::string& run_id) const;
    std::size_t export_artifacts(const std::string& run_id, const fs::path& dest) const;

    // Continues every run left in an active stage (other than awaiting_review).
    std::size_t resume();

    // Blocks until no pipeline thread works on the run.
    RunState wait_idle(const std::string& run_id,
                       std::chrono::milliseconds timeout = std::chrono::minutes(10)) const;

    RunState state(const std::string& run_id) const { return store_.state(run_id); }
    RunStore& store() { return store_; }
    const OrchestratorConfig& config() const { return config_; }

private:
    void spawn(const std::string& run_id);
    void pipeline(const std::string& run_id);
    void do_planning(const std::string& run_id);
    void do_execution(const std::string& run_id);
    void do_validation(const std::string& run_id);
    void do_synthesis(const std::string& run_id);
    void approve_plan(const std::string& run_id, const planner::Plan& plan, const ReviewDecision& decision);
    AgentClient agent_for(const std::string& run_id) const;
    lab::LabConfig lab_config() const;

    RunStore& store_;
    const gateway::Gateway& gateway_;
    const catalog::Catalog& catalog_;
    library::Library& library_;
    const planner::WebFetcher* web_;
    OrchestratorConfig config_;

    mutable std::mutex mu_;
    mutable std::condition_variable idle_cv_;
    std::set<std::string> busy_;
    std::set<std::string> rerun_;
    std::map<std::string, std::thread> threads_;
    std::mutex review_mu_;
    std::atomic<bool> stopping_{false};
};

// Owns every long-lived component of a service instance.
struct Services {
    ServiceConfig config;
    std::unique_ptr<gateway::Gateway> gateway;
    std::unique_ptr<catalog::Catalog> catalog;
    std::unique_ptr<library::Library> library;
    std::unique_ptr<planner::OfflineFetcher> web;
    std::unique_ptr<RunStore> store;
    std::unique_ptr<eval::ScoreStore> scores;
    std::unique_ptr<Orchestrator> orchestrator;
};

// Builds the component graph from config: registers backends, loads the
// catalog (generating missing fixture grids), opens and seeds the library,
// loads the evaluation suite and demo scores when present.
std::unique_ptr<Services> make_services(const ServiceConfig& config, const fs::path& exe_dir);

}  // namespace climagent::service
