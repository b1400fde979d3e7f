#pragma once

#include "climagent/orchestrator.hpp"
#include "support.hpp"

namespace climagent::test {

// A full service graph over the bundled fixtures with the mock backend kept
// reachable so tests can add routes.
struct TestServices {
    std::unique_ptr<service::Services> services;
    std::shared_ptr<gateway::MockBackend> mock;

    service::Orchestrator& orch() { return *services->orchestrator; }
    service::RunStore& store() { return *services->store; }
    library::Library& library() { return *services->library; }

    void route(std::string agent, std::vector<std::string> contains, std::string text) {
        gateway::MockBackend::Route r;
        r.agent = std::move(agent);
        r.contains = std::move(contains);
        r.text = std::move(text);
        mock->add_route(std::move(r));
    }
};

struct ServiceOptions {
    fs::path data_dir;  // empty keeps runs in memory
    int debug_cap = 15;
    int exec_timeout_s = 60;
    bool with_eval = true;
};

inline TestServices make_test_services(const ServiceOptions& o = {}) {
    TestServices t;
    auto s = std::make_unique<service::Services>();
    s->config.data_dir = o.data_dir.string();
    s->config.debug_cap = o.debug_cap;
    s->gateway = std::make_unique<gateway::Gateway>();
    t.mock = std::make_shared<gateway::MockBackend>("mock", fixtures() / "mock");
    s->gateway->register_backend(t.mock);
    s->catalog = std::make_unique<catalog::Catalog>(fixture_catalog());
    s->library = std::make_unique<library::Library>(*s->gateway);
    seed_library(*s->library);
    s->web = std::make_unique<planner::OfflineFetcher>(fixtures() / "web");
    s->store = std::make_unique<service::RunStore>(o.data_dir);
    std::vector<eval::TaskSpec> suite;
    if (o.with_eval) suite = eval::load_suite(fixtures() / "suite" / "tasks.jsonl");
    s->scores = std::make_unique<eval::ScoreStore>(suite);
    if (o.with_eval) s->scores->import_csv(fixtures() / "scores" / "demo_scores.csv");

    service::OrchestratorConfig oc;
    oc.lab.debug_cap = o.debug_cap;
    oc.lab.exec_timeout = std::chrono::seconds(o.exec_timeout_s);
    oc.lab.tools_binary = tools_binary();
    s->orchestrator = std::make_unique<service::Orchestrator>(*s->store, *s->gateway, *s->catalog, *s->library,
                                                              s->web.get(), oc);
    t.services = std::move(s);
    return t;
}

inline std::string l1_query() { return trim(read_file(fixtures() / "queries" / "l1_tas.txt")); }

inline service::RunOptions auto_options(bool auto_approve = true) {
    service::RunOptions o;
    o.auto_approve = auto_approve;
    return o;
}

}  // namespace climagent::test
