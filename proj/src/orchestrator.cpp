#include "climagent/orchestrator.hpp"

#include <algorithm>

#include "climagent/archive.hpp"
#include "climagent/error.hpp"
#include "climagent/scheduler.hpp"

namespace climagent::service {

namespace {

std::string script_ext(const std::string& runtime_tag) { return runtime_tag == "python3" ? ".py" : ".sh"; }

lab::TaskOutcome outcome_from_summary(const std::string& task_id, const json& s) {
    lab::TaskOutcome o;
    o.task_id = task_id;
    lab::CodeArtifact a;
    a.task_id = task_id;
    a.script_text = s.value("code", "");
    a.runtime_tag = s.value("runtime_tag", "sh");
    a.revision = s.value("revision", 0);
    a.source = s.value("source", "") == "template_adapted" ? lab::ArtifactSource::template_adapted
                                                           : lab::ArtifactSource::generated;
    o.artifacts.push_back(a);
    const bool ok = s.value("status", "") == "validated";
    o.result.status = ok ? lab::ExecStatus::ok : lab::ExecStatus::error;
    o.result.digest = s.value("digest", "");
    o.data = {"data", ok, {}};
    o.figure = {"figure", ok, {}};
    return o;
}

}  // namespace

Orchestrator::Orchestrator(RunStore& store, const gateway::Gateway& gateway, const catalog::Catalog& catalog,
                           library::Library& library, const planner::WebFetcher* web, OrchestratorConfig config)
    : store_(store), gateway_(gateway), catalog_(catalog), library_(library), web_(web), config_(std::move(config)) {}

Orchestrator::~Orchestrator() {
    stopping_ = true;
    std::map<std::string, std::thread> threads;
    {
        std::lock_guard lock(mu_);
        threads.swap(threads_);
    }
    for (auto& [id, t] : threads)
        if (t.joinable()) t.join();
}

AgentClient Orchestrator::agent_for(const std::string& run_id) const {
    auto* store = &store_;
    return AgentClient(gateway_, config_.backend_id, [store, run_id](const std::string& type, const json& payload) {
        store->append(run_id, type, payload);
    });
}

lab::LabConfig Orchestrator::lab_config() const { return config_.lab; }

void Orchestrator::spawn(const std::string& run_id) {
    std::lock_guard lock(mu_);
    if (stopping_) return;
    if (busy_.count(run_id)) {
        // The worker may be on its way out; make it take another pass.
        rerun_.insert(run_id);
        return;
    }
    if (auto it = threads_.find(run_id); it != threads_.end()) {
        if (it->second.joinable()) it->second.join();
        threads_.erase(it);
    }
    busy_.insert(run_id);
    threads_[run_id] = std::thread([this, run_id] {
        for (;;) {
            pipeline(run_id);
            std::lock_guard l(mu_);
            if (rerun_.erase(run_id) && !stopping_) continue;
            busy_.erase(run_id);
            idle_cv_.notify_all();
            return;
        }
    });
}

RunState Orchestrator::wait_idle(const std::string& run_id, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    idle_cv_.wait_for(lock, timeout, [&] { return !busy_.count(run_id); });
    lock.unlock();
    return store_.state(run_id);
}

std::string Orchestrator::create_run(const planner::UserQuery& query, const RunOptions& options) {
    auto id = store_.create_run(query, options);
    store_.transition(id, Stage::planning);
    spawn(id);
    return id;
}

void Orchestrator::pipeline(const std::string& run_id) {
    for (;;) {
        if (stopping_) return;
        auto st = store_.state(run_id);
        try {
            switch (st.stage) {
                case Stage::created:
                    store_.transition(run_id, Stage::planning);
                    break;
                case Stage::planning:
                    do_planning(run_id);
                    break;
                case Stage::executing:
                    do_execution(run_id);
                    break;
                case Stage::validating:
                    do_validation(run_id);
                    break;
                case Stage::synthesizing:
                    do_synthesis(run_id);
                    break;
                default:
                    return;  // awaiting_review or terminal
            }
        } catch (const std::exception& e) {
            auto now = store_.state(run_id);
            if (is_terminal(now.stage)) return;  // cancelled underneath us
            json payload = {{"error", e.what()}};
            if (const auto* err = dynamic_cast<const Error*>(&e)) payload["code"] = std::string(to_string(err->code()));
            try {
                store_.transition(run_id, Stage::failed, payload);
            } catch (const std::exception&) {
            }
            return;
        }
    }
}

void Orchestrator::do_planning(const std::string& run_id) {
    auto st = store_.state(run_id);
    auto agent = agent_for(run_id);
    store_.append(run_id, "planning_context", {{"reviewer_comments", st.reviewer_comments}});
    auto pc = config_.planner;
    planner::Planner planner(agent, library_, catalog_, web_, pc);
    auto plan = planner.plan(st.query, st.reviewer_comments);
    store_.append(run_id, "plan_proposed", {{"plan", plan.to_json()}});
    store_.transition(run_id, Stage::awaiting_review);
    if (st.options.auto_approve) {
        ReviewDecision d;
        d.reviewer = "auto";
        d.approved = true;
        d.comment = "auto-approved";
        d.run_ref = run_id;
        store_.append(run_id, "review_submitted", {{"decision", d.to_json()}, {"synthetic", true}});
        approve_plan(run_id, plan, d);
    }
}

void Orchestrator::approve_plan(const std::string& run_id, const planner::Plan& plan, const ReviewDecision&) {
    store_.append(run_id, "plan_approved", {{"plan", plan.to_json()}});
    store_.put_artifact(run_id, "plan.json", plan.to_json().dump(2));
    store_.transition(run_id, Stage::executing);
}

Stage Orchestrator::submit_review(const std::string& run_id, const ReviewDecision& decision) {
    std::lock_guard lock(review_mu_);
    auto st = store_.state(run_id);
    if (st.stage != Stage::awaiting_review || !st.proposed_plan)
        fail(Errc::wrong_stage, "run " + run_id + " is " + st.stage_label() + ", not awaiting_review");
    auto agent = agent_for(run_id);
    planner::Planner planner(agent, library_, catalog_, web_, config_.planner);
    auto outcome = planner.apply_review(*st.proposed_plan, decision);  // validates edits before logging anything
    store_.append(run_id, "review_submitted", {{"decision", decision.to_json()}});
    if (outcome.action == planner::ReviewAction::approved) {
        approve_plan(run_id, outcome.plan, decision);
    } else {
        store_.transition(run_id, Stage::planning, {{"comment", decision.comment}});
    }
    spawn(run_id);
    return store_.state(run_id).stage;
}

void Orchestrator::do_execution(const std::string& run_id) {
    auto st = store_.state(run_id);
    if (!st.plan) fail(Errc::wrong_stage, "run " + run_id + " has no approved plan");
    const auto plan = *st.plan;
    auto agent = agent_for(run_id);
    lab::Lab lab(agent, library_, catalog_, lab_config());
    const auto work = store_.work_dir(run_id);

    auto invocations = lab.compile_preprocess(plan);
    json inv = json::array();
    for (const auto& i : invocations) inv.push_back(i.to_json());
    store_.put_artifact(run_id, "preprocess/invocations.json", inv.dump(2));
    auto prepared = lab.run_preprocess(plan, invocations, work / "prepared");
    store_.put_artifact(run_id, "preprocess/log.json", prepared.log.dump(2));

    auto graph = lab::build_task_graph(plan);
    std::map<std::string, fs::path> ws_roots;
    for (const auto& t : graph.nodes) ws_roots[t.id] = work / "tasks" / t.id / "ws";

    auto store_code = [&](const std::string& tid, const std::vector<lab::CodeArtifact>& artifacts) {
        json meta = json::array();
        for (const auto& a : artifacts) {
            store_.put_artifact(run_id, "tasks/" + tid + "/code/rev" + std::to_string(a.revision) + script_ext(a.runtime_tag),
                                a.script_text);
            auto m = a.to_json();
            m.erase("script_text");
            meta.push_back(m);
        }
        store_.put_artifact(run_id, "tasks/" + tid + "/code/artifacts.json", meta.dump(2));
    };

    auto runner = [&](const planner::DiagnosticTask& task) {
        std::map<std::string, fs::path> upstream;
        for (const auto& d : task.depends_on) upstream[d] = ws_roots.at(d);
        auto ws = lab.prepare_workspace(work / "tasks" / task.id, task, prepared, upstream);
        const bool figure = plan.has_figure(task.id);
        lab::TaskReport report;
        report.task_id = task.id;
        try {
            auto outcome = lab.run_task(task, ws, figure);
            const auto& final = outcome.final_artifact();
            const auto tdir = "tasks/" + task.id + "/";
            store_code(task.id, outcome.artifacts);
            store_.put_artifact(run_id, tdir + "execution.json", outcome.result.to_json().dump(2));
            store_.put_artifact(run_id, tdir + "transcript.json", outcome.transcript.to_json().dump(2));
            store_.put_artifact(run_id, tdir + "verdicts.json",
                                json::array({outcome.data.to_json(), outcome.figure.to_json()}).dump(2));
            for (const auto& rel : outcome.result.produced_files)
                store_.put_artifact(run_id, tdir + rel, read_file(ws.root() / rel));
            json figures = json::array();
            if (outcome.result.manifest) {
                for (const auto& f : outcome.result.manifest->value("figures", json::array())) {
                    auto p = ws.root() / f.value("path", "");
                    auto side = f.contains("sidecar") ? ws.root() / f["sidecar"].get<std::string>()
                                                      : p.parent_path() / (p.stem().string() + ".meta.json");
                    figures.push_back({{"path", p.string()}, {"sidecar", side.string()}});
                }
            }
            report.status = outcome.validated() ? lab::TaskStatus::validated : lab::TaskStatus::failed;
            report.digest = outcome.result.digest;
            store_.append(run_id, "task_result",
                          {{"task", task.id},
                           {"status", std::string(lab::to_string(report.status))},
                           {"digest", report.digest},
                           {"code", final.script_text},
                           {"runtime_tag", final.runtime_tag},
                           {"revision", final.revision},
                           {"source", std::string(lab::to_string(final.source))},
                           {"template_id", final.template_id},
                           {"rounds", outcome.transcript.rounds.size()},
                           {"figures", figures}});
            report.outcome = std::move(outcome);
        } catch (const lab::DebugExhaustedError& e) {
            store_code(task.id, e.artifacts());
            store_.put_artifact(run_id, "tasks/" + task.id + "/transcript.json", e.transcript().to_json().dump(2));
            store_.append(run_id, "task_result", {{"task", task.id},
                                                  {"status", "failed"},
                                                  {"error", e.what()},
                                                  {"code_name", std::string(to_string(e.code()))},
                                                  {"rounds", e.transcript().rounds.size()}});
            throw;
        } catch (const Error& e) {
            store_.append(run_id, "task_result", {{"task", task.id},
                                                  {"status", "failed"},
                                                  {"error", e.what()},
                                                  {"code_name", std::string(to_string(e.code()))}});
            throw;
        }
        return report;
    };

    auto result = lab::schedule_run(graph, runner, st.options.worker_count,
                                    [&](const std::string& type, const json& payload) { store_.append(run_id, type, payload); });
    if (result.first_failure) {
        const auto& r = result.reports.at(*result.first_failure);
        auto code = Errc::invalid_argument;
        // The logged task_result carries the real cause.
        for (const auto& ev : store_.events(run_id))
            if (ev.event_type == "task_result" && ev.payload.value("task", "") == *result.first_failure &&
                ev.payload.contains("code_name"))
                code = errc_from_string(ev.payload["code_name"].get<std::string>());
        fail(code, "task " + *result.first_failure + " failed: " + r.error);
    }
    store_.transition(run_id, Stage::validating);
}

void Orchestrator::do_validation(const std::string& run_id) {
    auto st = store_.state(run_id);
    auto agent = agent_for(run_id);
    lab::Lab lab(agent, library_, catalog_, lab_config());
    for (const auto& task : st.plan->diagnostics) {
        auto it = st.tasks.find(task.id);
        if (it == st.tasks.end() || it->second.status != "validated") continue;
        if (it->second.verdict) continue;  // a human already decided
        lab.promote_on_success(task, outcome_from_summary(task.id, it->second.summary), std::nullopt, run_id);
    }
    store_.transition(run_id, Stage::synthesizing);
}

void Orchestrator::do_synthesis(const std::string& run_id) {
    auto st = store_.state(run_id);
    auto agent = agent_for(run_id);
    auto sc = config_.synthesis;
    sc.expert_count = st.options.expert_count;
    synthesis::Synthesizer synth(agent, &library_, sc);

    std::vector<synthesis::FigureInterpretation> interpretations;
    for (const auto& task : st.plan->diagnostics) {
        auto it = st.tasks.find(task.id);
        if (it == st.tasks.end() || it->second.status != "validated") continue;
        for (const auto& f : it->second.summary.value("figures", json::array())) {
            synthesis::TaskContext ctx{task.id, task.description, st.plan->objective};
            interpretations.push_back(synth.interpret_figure(f.value("path", ""), f.value("sidecar", ""), ctx));
        }
    }
    auto report = synth.summarize_reports(interpretations, st.plan->objective);
    store_.put_artifact(run_id, "report/report.json", report.to_json().dump(2));
    store_.put_artifact(run_id, "report/report.md", report.markdown());
    store_.append(run_id, "report_ready", {{"sections", report.sections.size()}});

    auto topic = st.options.topic.empty() ? st.query.text : st.options.topic;
    auto committee = synth.convene_committee(topic, report);
    auto assessments = synth.collect_assessments(committee, report);
    auto cr = synth.synthesize_committee_report(committee, assessments);
    store_.put_artifact(run_id, "report/committee.json", cr.to_json().dump(2));
    store_.put_artifact(run_id, "report/committee.md", cr.markdown());
    store_.append(run_id, "committee_ready", {{"experts", cr.assessments.size()}, {"sentiment", cr.sentiment}});
    store_.transition(run_id, Stage::completed);
}

json Orchestrator::submit_verdict(const std::string& run_id, const std::string& task_id,
                                  const ReviewDecision& decision) {
    auto st = store_.state(run_id);
    if (st.stage != Stage::validating && st.stage != Stage::completed)
        fail(Errc::wrong_stage, "verdicts need a validating or completed run; run is " + st.stage_label());
    const planner::DiagnosticTask* task = st.plan ? st.plan->find_task(task_id) : nullptr;
    auto it = st.tasks.find(task_id);
    if (!task || it == st.tasks.end()) fail(Errc::unknown_task, "run " + run_id + " has no task " + task_id);
    if (it->second.status != "validated")
        fail(Errc::wrong_stage, "task " + task_id + " has no validated outputs");

    auto agent = agent_for(run_id);
    lab::Lab lab(agent, library_, catalog_, lab_config());
    ReviewDecision d = decision;
    if (d.run_ref.empty()) d.run_ref = run_id;
    std::optional<std::string> template_id;
    if (d.approved) template_id = lab.promote_on_success(*task, outcome_from_summary(task_id, it->second.summary), d, run_id);
    json payload = {{"task", task_id},
                    {"approved", d.approved},
                    {"reviewer", d.reviewer},
                    {"comment", d.comment},
                    {"template_id", template_id ? json(*template_id) : json(nullptr)}};
    store_.append(run_id, "verdict_recorded", payload);
    return payload;
}

void Orchestrator::cancel(const std::string& run_id) {
    auto st = store_.state(run_id);
    if (is_terminal(st.stage)) fail(Errc::wrong_stage, "run " + run_id + " is already " + st.stage_label());
    store_.transition(run_id, Stage::cancelled);
}

void Orchestrator::stream_events(const std::string& run_id, std::uint64_t from_seq,
                                 const std::function<bool(const Event&)>& sink,
                                 std::chrono::milliseconds poll) const {
    std::uint64_t next = std::max<std::uint64_t>(from_seq, 1);
    for (;;) {
        auto evs = store_.events(run_id, next);
        for (const auto& e : evs) {
            if (!sink(e)) return;
            next = e.seq + 1;
        }
        auto st = store_.state(run_id);
        if (is_terminal(st.stage) && st.last_seq < next) return;
        store_.wait_for_events(run_id, next - 1, poll);
    }
}

std::string Orchestrator::export_archive(const std::string& run_id) const {
    auto st = store_.state(run_id);
    if (!is_terminal(st.stage)) fail(Errc::run_active, "run " + run_id + " is still " + st.stage_label());
    std::vector<archive::Entry> entries;
    std::string log;
    for (const auto& e : store_.events(run_id)) log += e.to_json().dump() + "\n";
    entries.push_back({run_id + "/events.jsonl", log});
    entries.push_back({run_id + "/state.json", st.to_json().dump(2)});
    for (const auto& [name, digest] : st.artifacts)
        entries.push_back({run_id + "/artifacts/" + name, store_.read_artifact(run_id, name)});
    return archive::make_tar(std::move(entries));
}

std::size_t Orchestrator::export_artifacts(const std::string& run_id, const fs::path& dest) const {
    auto bytes = export_archive(run_id);
    try {
        write_file_atomic(dest, bytes);
    } catch (const fs::filesystem_error& e) {
        fail(Errc::persistence_failure, e.what());
    }
    return archive::read_tar(bytes).size();
}

std::size_t Orchestrator::resume() {
    std::size_t n = 0;
    for (const auto& id : store_.list_runs()) {
        auto st = store_.state(id);
        if (is_terminal(st.stage) || st.stage == Stage::awaiting_review) continue;
        store_.append(id, "run_resumed", {{"stage", st.stage_label()}});
        spawn(id);
        ++n;
    }
    return n;
}

std::unique_ptr<Services> make_services(const ServiceConfig& config, const fs::path& exe_dir) {
    auto s = std::make_unique<Services>();
    s->config = config;
    s->gateway = std::make_unique<gateway::Gateway>();
    auto backends = config.backends;
    if (backends.empty()) {
        gateway::BackendDescriptor d;
        d.id = "mock";
        d.transport = "mock";
        d.fixture_dir = config.mock_dir;
        backends.push_back(d);
    }
    for (const auto& d : backends) s->gateway->register_backend(d);

    s->catalog = std::make_unique<catalog::Catalog>(catalog::Catalog::load(config.catalog_index, config.data_root));
    catalog::generate_fixture_data(*s->catalog, false);

    s->library = std::make_unique<library::Library>(*s->gateway, config.library_dir);
    fs::path tools = config.tools_binary.empty() ? exe_dir / "climate-tools" : fs::path(config.tools_binary);
    if (s->library->size() == 0 && !config.library_seed.empty() && fs::exists(config.library_seed))
        s->library->seed_from(config.library_seed, tools.parent_path());

    if (!config.web_dir.empty()) s->web = std::make_unique<planner::OfflineFetcher>(config.web_dir);
    s->store = std::make_unique<RunStore>(config.data_dir);

    std::vector<eval::TaskSpec> suite;
    if (!config.suite.empty() && fs::exists(config.suite)) suite = eval::load_suite(config.suite);
    s->scores = std::make_unique<eval::ScoreStore>(suite);
    if (!suite.empty() && !config.scores.empty() && fs::exists(config.scores)) s->scores->import_csv(config.scores);

    OrchestratorConfig oc;
    oc.planner.candidate_count = config.candidate_count;
    oc.lab.debug_cap = config.debug_cap;
    oc.lab.template_threshold = config.template_threshold;
    oc.lab.exec_timeout = std::chrono::seconds(config.exec_timeout_s);
    oc.lab.confine = config.confine;
    oc.lab.tools_binary = fs::absolute(tools);
    oc.synthesis.expert_count = config.expert_count;
    oc.synthesis.confidence_weighted = config.confidence_weighted;
    s->orchestrator = std::make_unique<Orchestrator>(*s->store, *s->gateway, *s->catalog, *s->library, s->web.get(), oc);
    return s;
}

}  // namespace climagent::service
