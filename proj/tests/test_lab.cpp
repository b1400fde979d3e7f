#include <gtest/gtest.h>

#include <fstream>

#include "climagent/grid.hpp"
#include "climagent/lab.hpp"
#include "climagent/sandbox.hpp"
#include "support.hpp"

using namespace climagent;
using namespace climagent::lab;

namespace {

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return Errc::invalid_argument;
}

planner::Plan fixture_plan() {
    return planner::parse_plan_text(read_file(test::fixtures() / "mock" / "plans" / "tas_clim_merged.md"));
}

planner::DiagnosticTask simple_task(std::string id, std::string description = "toy diagnostic") {
    planner::DiagnosticTask t;
    t.id = std::move(id);
    t.description = std::move(description);
    t.method = "toy";
    return t;
}

struct Fixture {
    catalog::Catalog catalog = test::fixture_catalog();
    test::MockGateway mg;
    library::Library lib{mg.gateway};
    std::vector<std::pair<std::string, json>> events;
    std::mutex mu;
    AgentClient agent{mg.gateway, "", [this](const std::string& t, const json& p) {
                          std::lock_guard lock(mu);
                          events.emplace_back(t, p);
                      }};
    test::TempDir dir;

    Fixture() { test::seed_library(lib); }

    LabConfig config(int cap = 15) {
        LabConfig c;
        c.debug_cap = cap;
        c.tools_binary = test::tools_binary();
        c.exec_timeout = std::chrono::seconds(60);
        return c;
    }
    Lab lab(int cap = 15) { return Lab(agent, lib, catalog, config(cap)); }

    Workspace workspace(const planner::DiagnosticTask& task) {
        return lab().prepare_workspace(dir / task.id, task, PreparedData{}, {});
    }

    int count(const std::string& type) {
        std::lock_guard lock(mu);
        return int(std::count_if(events.begin(), events.end(), [&](auto& e) { return e.first == type; }));
    }
};

CodeArtifact artifact(const std::string& task, const std::string& script, std::string tag = "sh") {
    CodeArtifact a;
    a.task_id = task;
    a.script_text = script;
    a.runtime_tag = std::move(tag);
    return a;
}

bool has_finding(const ValidationVerdict& v, const std::string& check) {
    return std::any_of(v.findings.begin(), v.findings.end(), [&](const Finding& f) { return f.check == check; });
}

// Writes result.json (and optionally a figure) from the test side so the
// validator sees exactly the manifest under test.
ExecutionResult fake_result(const Workspace& ws, json manifest) {
    ExecutionResult r;
    r.status = ExecStatus::ok;
    r.exit_code = 0;
    write_json_file(ws.root() / "result.json", manifest);
    r.manifest = manifest;
    return r;
}

json base_manifest() {
    return {{"task_id", "t"},
            {"variable", "tas"},
            {"units", "K"},
            {"outputs", {{{"path", "outputs/series.json"}, {"kind", "series"}}}},
            {"statistics", {{{"name", "m"}, {"value", 288.0}, {"units", "K"}, {"kind", "level"}, {"variable", "tas"}}}},
            {"figures", json::array()}};
}

}  // namespace

TEST(TaskGraph, DiamondTopologicalOrder) {
    planner::Plan p;
    auto a = simple_task("A"), b = simple_task("B"), c = simple_task("C"), d = simple_task("D");
    b.depends_on = {"A"};
    c.depends_on = {"A"};
    d.depends_on = {"B", "C"};
    p.diagnostics = {d, c, b, a};
    auto g = build_task_graph(p);
    EXPECT_EQ(g.edges.size(), 4u);
    auto pos = [&](const std::string& id) { return std::find(g.topo_order.begin(), g.topo_order.end(), id) - g.topo_order.begin(); };
    for (const auto& [dep, t] : g.edges) EXPECT_LT(pos(dep), pos(t));
    EXPECT_EQ(g.dependencies("D"), (std::vector<std::string>{"B", "C"}));
    EXPECT_EQ(g.node("C").id, "C");
    EXPECT_EQ(code_of([&] { g.node("Z"); }), Errc::unknown_task);
}

TEST(TaskGraph, CyclesDetected) {
    planner::Plan p;
    auto a = simple_task("A");
    a.depends_on = {"A"};
    p.diagnostics = {a};
    EXPECT_EQ(code_of([&] { build_task_graph(p); }), Errc::cycle_detected);
    auto b = simple_task("B"), c = simple_task("C");
    b.depends_on = {"C"};
    c.depends_on = {"B"};
    p.diagnostics = {simple_task("A"), b, c};
    EXPECT_EQ(code_of([&] { build_task_graph(p); }), Errc::cycle_detected);
}

TEST(Preprocess, CompilesStepsToToolCalls) {
    Fixture f;
    auto p = fixture_plan();
    p.preprocessing.push_back({"*", "convert_units", {{"from", "K"}, {"to", "degC"}}});
    p.preprocessing.push_back({"hist", "statistic", {{"statistic", "anomaly"}, {"baseline", {1985, 2000}}}});
    auto inv = f.lab().compile_preprocess(p);
    ASSERT_EQ(inv.size(), 4u);
    EXPECT_EQ(inv[0].tool, "subset-time");
    EXPECT_EQ(inv[0].args, (std::vector<std::string>{"subset-time", "--period", "1985-2014"}));
    EXPECT_EQ(inv[1].args, (std::vector<std::string>{"regrid", "--nlat", "18", "--nlon", "24"}));
    EXPECT_EQ(inv[2].tool, "convert-units");
    auto off = std::find(inv[2].args.begin(), inv[2].args.end(), "--offset");
    ASSERT_NE(off, inv[2].args.end());
    EXPECT_DOUBLE_EQ(std::stod(*(off + 1)), -273.15);
    EXPECT_EQ(inv[3].dataset, "hist");
    EXPECT_EQ(inv[3].args, (std::vector<std::string>{"anomaly-field", "--baseline", "1985-2000"}));
    EXPECT_EQ(inv[0].entrypoint, fs::absolute(test::tools_binary()));
}

TEST(Preprocess, UnsupportedSteps) {
    Fixture f;
    auto p = fixture_plan();
    p.preprocessing = {{"*", "statistic", {{"statistic", "skewness"}, {"period", {1985, 2014}}}}};
    EXPECT_EQ(code_of([&] { f.lab().compile_preprocess(p); }), Errc::no_tool_for_step);
    p.preprocessing = {{"*", "convert_units", {{"from", "K"}, {"to", "furlong"}}}};
    EXPECT_EQ(code_of([&] { f.lab().compile_preprocess(p); }), Errc::unknown_unit_conversion);
    p.preprocessing = {{"*", "detrend", json::object()}};
    EXPECT_EQ(code_of([&] { f.lab().compile_preprocess(p); }), Errc::no_tool_for_step);
    p.preprocessing = {{"*", "regrid", {{"target", "fine"}}}};
    EXPECT_EQ(code_of([&] { f.lab().compile_preprocess(p); }), Errc::no_tool_for_step);

    // Without tool manifests in the library nothing binds.
    test::MockGateway mg(fs::path{});
    library::Library empty(mg.gateway);
    AgentClient agent(mg.gateway);
    Lab bare(agent, empty, f.catalog, f.config());
    EXPECT_EQ(code_of([&] { bare.compile_preprocess(fixture_plan()); }), Errc::no_tool_for_step);
}

TEST(Preprocess, RunsToolsOnEveryDataset) {
    Fixture f;
    auto p = fixture_plan();
    p.preprocessing.push_back({"era5", "convert_units", {{"from", "K"}, {"to", "degC"}}});
    auto lab = f.lab();
    auto prepared = lab.run_preprocess(p, lab.compile_preprocess(p), f.dir / "prep");
    ASSERT_EQ(prepared.files["hist"].size(), 5u);
    ASSERT_EQ(prepared.files["era5"].size(), 1u);
    EXPECT_EQ(prepared.files["era5"][0].filename(), "ERA5_obs_obs_tas_monthly.json");
    for (const auto& file : prepared.files["hist"]) {
        auto g = grid::read_grid(file);
        EXPECT_EQ(g.nlat(), 18u);
        EXPECT_EQ(g.nlon(), 24u);
        EXPECT_EQ(g.nt(), 360u);
        EXPECT_EQ(g.units, "K");
    }
    auto obs = grid::read_grid(prepared.files["era5"][0]);
    EXPECT_EQ(obs.units, "degC");
    auto raw = grid::read_grid(f.catalog.resolve(f.catalog.query(p.datasets[1].query).front()));
    EXPECT_LT(std::abs(obs.data[0] - (raw.data[0] - 273.15)), 5.0);
    EXPECT_EQ(prepared.log.size(), 5u * 2 + 1u * 3);
}

TEST(Workspace, StagesDatasetsAndUpstreamOutputs) {
    Fixture f;
    test::TempDir src;
    std::ofstream(src / "a.json") << "{}";
    PreparedData prepared;
    prepared.files["hist"] = {src / "a.json"};
    test::TempDir up;
    fs::create_directories(up / "outputs");
    std::ofstream(up / "outputs" / "clim.json") << "{\"x\":1}";
    std::ofstream(up / "result.json") << "{\"task_id\":\"up\"}";
    auto task = simple_task("down");
    task.inputs = {"hist", "up"};
    task.depends_on = {"up"};
    auto ws = f.lab().prepare_workspace(f.dir / "down", task, prepared, {{"up", up.path()}});
    EXPECT_TRUE(fs::is_symlink(ws.root() / "inputs"));
    EXPECT_TRUE(fs::exists(ws.root() / "inputs" / "hist" / "a.json"));
    EXPECT_EQ(read_file(ws.root() / "inputs" / "up" / "clim.json"), "{\"x\":1}");
    EXPECT_TRUE(fs::exists(ws.root() / "inputs" / "up" / "result.json"));
    task.inputs = {"nothing"};
    EXPECT_EQ(code_of([&] { f.lab().prepare_workspace(f.dir / "bad", task, prepared, {}); }), Errc::invalid_argument);
}

TEST(CodeGen, GeneratedFromFixture) {
    Fixture f;
    auto plan = fixture_plan();
    auto lab = f.lab();
    const auto& task = *plan.find_task("tas_model_clim");
    auto a = lab.generate_code(task, lab.retrieve_templates(task), lab.doc_context(task));
    EXPECT_EQ(a.source, ArtifactSource::generated);
    EXPECT_EQ(a.runtime_tag, "sh");
    EXPECT_NE(a.script_text.find("$CLIMATE_TOOLS"), std::string::npos);
    EXPECT_EQ(a.revision, 0);
}

TEST(CodeGen, OneRepromptThenParseFailure) {
    Fixture f;
    f.mg.route("lab.codegen", {"task: chatty\n"}, "Sure! Here is what I would do, in prose.");
    f.mg.route("lab.codegen", {"task: chatty\n", "No script block found"}, test::fenced_sh("echo hi\n"));
    auto a = f.lab().generate_code(simple_task("chatty"), {}, "");
    EXPECT_EQ(a.script_text, "echo hi\n");

    f.mg.route("lab.codegen", {"task: mute\n"}, "no code, sorry");
    EXPECT_EQ(code_of([&] { f.lab().generate_code(simple_task("mute"), {}, ""); }), Errc::code_parse_failure);
}

TEST(CodeGen, PythonFenceSelectsInterpreter) {
    Fixture f;
    f.mg.route("lab.codegen", {"task: py\n"}, "```python\nprint('x')\n```");
    EXPECT_EQ(f.lab().generate_code(simple_task("py"), {}, "").runtime_tag, "python3");
}

TEST(CodeGen, TemplateAboveThresholdIsAdapted) {
    Fixture f;
    ReviewDecision ok{"alice", true, std::nullopt, "", "run-x"};
    auto id = f.lib.promote_template({"toy diagnostic of ocean heat", "echo old\n", "d", "sh"}, ok);
    f.mg.route("lab.codegen", {"task: adapt\n"}, test::fenced_sh("echo adapted\n"));
    auto task = simple_task("adapt", "toy diagnostic of ocean heat");
    auto lab = f.lab();
    auto templates = lab.retrieve_templates(task);
    ASSERT_FALSE(templates.empty());
    EXPECT_EQ(templates[0].record.id, id);
    EXPECT_NEAR(templates[0].score, 1.0, 1e-12);
    auto a = lab.generate_code(task, templates, "");
    EXPECT_EQ(a.source, ArtifactSource::template_adapted);
    EXPECT_EQ(a.template_id, id);

    // A weak match stays below the threshold.
    auto other = simple_task("adapt", "precipitation seasonal cycle over monsoon regions");
    auto weak = lab.retrieve_templates(other);
    ASSERT_FALSE(weak.empty());
    EXPECT_LT(weak[0].score, 0.92);
    EXPECT_EQ(lab.generate_code(other, weak, "").source, ArtifactSource::generated);
}

TEST(Execution, RunsConfinedWithContractEnvironment) {
    Fixture f;
    auto task = simple_task("envcheck");
    auto ws = f.workspace(task);
    auto script = "set -eu\n"
                  "test \"$1\" = --workspace && test \"$2\" = \"$WORKSPACE\"\n"
                  "test \"$(pwd -P)\" = \"$(cd \"$WORKSPACE\" && pwd -P)\"\n"
                  "test -x \"$CLIMATE_TOOLS\"\n"
                  "echo \"$CLIMAGENT_TASK_ID\" > outputs/id.txt\n"
                  "cat /etc/hostname >/dev/null\n" +
                  std::string("echo x > '") + (f.dir / "escape.txt").string() + "' 2>/dev/null && exit 9 || true\n" +
                  "echo '{\"task_id\":\"envcheck\",\"units\":\"1\",\"value\":NaN}' > result.json\n";
    auto r = f.lab().execute_artifact(artifact("envcheck", script), ws);
    EXPECT_EQ(r.status, ExecStatus::ok) << r.err;
    EXPECT_EQ(read_file(ws.root() / "outputs" / "id.txt"), "envcheck\n");
    EXPECT_FALSE(fs::exists(f.dir / "escape.txt"));
    if (sandbox::landlock_abi() > 0) EXPECT_TRUE(r.confined);
    ASSERT_TRUE(r.manifest);
    EXPECT_TRUE((*r.manifest)["value"].is_null());
    EXPECT_EQ(r.produced_files, (std::vector<std::string>{"outputs/id.txt", "result.json"}));
    EXPECT_TRUE(fs::exists(ws.scripts() / "rev0.sh"));
}

TEST(Execution, TimeoutAndErrors) {
    Fixture f;
    auto task = simple_task("slow");
    auto ws = f.workspace(task);
    auto cfg = f.config();
    cfg.exec_timeout = std::chrono::milliseconds(300);
    Lab lab(f.agent, f.lib, f.catalog, cfg);
    auto r = lab.execute_artifact(artifact("slow", "sleep 20\n"), ws);
    EXPECT_EQ(r.status, ExecStatus::timeout);
    r = lab.execute_artifact(artifact("slow", "exit 4\n"), ws);
    EXPECT_EQ(r.status, ExecStatus::error);
    EXPECT_EQ(r.exit_code, 4);
    r = lab.execute_artifact(artifact("slow", "true\n"), ws);
    EXPECT_EQ(r.status, ExecStatus::error);
    EXPECT_NE(r.err.find("result.json was not written"), std::string::npos);
    EXPECT_EQ(code_of([&] { lab.execute_artifact(artifact("slow", "x", "cobol"), ws); }), Errc::sandbox_setup_failure);
}

TEST(Execution, DigestDependsOnOutputsOnly) {
    Fixture f;
    auto ws = f.workspace(simple_task("d"));
    auto lab = f.lab();
    auto a = lab.execute_artifact(artifact("d", test::valid_script()), ws);
    auto b = lab.execute_artifact(artifact("d", "# comment\n" + test::valid_script()), ws);
    EXPECT_EQ(a.digest, b.digest);
    auto c = lab.execute_artifact(artifact("d", test::valid_script(289.0)), ws);
    EXPECT_NE(a.digest, c.digest);
}

TEST(Validation, AcceptsWellFormedOutputs) {
    Fixture f;
    auto task = simple_task("t");
    auto ws = f.workspace(task);
    auto r = f.lab().execute_artifact(artifact("t", test::valid_script()), ws);
    auto [d, fig] = f.lab().validate_outputs(r, task, ws, false);
    EXPECT_TRUE(d.passed);
    EXPECT_TRUE(fig.passed);
    auto [d2, fig2] = f.lab().validate_outputs(r, task, ws, true);
    EXPECT_TRUE(has_finding(fig2, "FigureMissing"));
}

TEST(Validation, DataFindings) {
    Fixture f;
    auto task = simple_task("t");
    auto ws = f.workspace(task);
    fs::create_directories(ws.root() / "outputs");
    std::ofstream(ws.root() / "outputs" / "series.json") << R"({"units":"K","values":[1, NaN]})";

    auto [d, fig] = f.lab().validate_outputs(fake_result(ws, base_manifest()), task, ws, false);
    EXPECT_TRUE(has_finding(d, "NonFiniteValue"));

    std::ofstream(ws.root() / "outputs" / "series.json", std::ios::trunc) << R"({"units":"K","values":[1, 2]})";
    auto m = base_manifest();
    m["statistics"][0]["value"] = 500.0;
    EXPECT_TRUE(has_finding(f.lab().validate_outputs(fake_result(ws, m), task, ws, false).first, "Implausible"));
    // Only level statistics are range-checked.
    m["statistics"][0]["kind"] = "change";
    EXPECT_TRUE(f.lab().validate_outputs(fake_result(ws, m), task, ws, false).first.passed);
    m["statistics"][0]["kind"] = "level";
    m["statistics"][0]["units"] = "degC";
    m["statistics"][0]["value"] = 14.0;
    EXPECT_TRUE(f.lab().validate_outputs(fake_result(ws, m), task, ws, false).first.passed);

    m = base_manifest();
    m["units"] = "";
    EXPECT_TRUE(has_finding(f.lab().validate_outputs(fake_result(ws, m), task, ws, false).first, "UnitsMissing"));
    m = base_manifest();
    m["outputs"][0]["path"] = "outputs/ghost.json";
    EXPECT_TRUE(has_finding(f.lab().validate_outputs(fake_result(ws, m), task, ws, false).first, "DeclaredOutputMissing"));
    m = base_manifest();
    m["outputs"][0]["path"] = "../../etc/passwd";
    EXPECT_TRUE(has_finding(f.lab().validate_outputs(fake_result(ws, m), task, ws, false).first, "DeclaredOutputMissing"));
    m = base_manifest();
    m["statistics"][0]["value"] = nullptr;
    EXPECT_TRUE(has_finding(f.lab().validate_outputs(fake_result(ws, m), task, ws, false).first, "NonFiniteValue"));

    ExecutionResult failed;
    failed.status = ExecStatus::error;
    EXPECT_TRUE(has_finding(f.lab().validate_outputs(failed, task, ws, false).first, "ManifestPresent"));
}

TEST(Validation, FigureFindings) {
    Fixture f;
    auto task = simple_task("t");
    auto ws = f.workspace(task);
    fs::create_directories(ws.root() / "outputs");
    std::ofstream(ws.root() / "outputs" / "series.json") << R"({"units":"K","values":[1]})";
    std::ofstream(ws.root() / "outputs" / "fig.svg") << "<svg/>";
    auto m = base_manifest();
    m["figures"] = {{{"path", "outputs/fig.svg"}, {"sidecar", "outputs/fig.meta.json"}}};
    auto check = [&] { return f.lab().validate_outputs(fake_result(ws, m), task, ws, true).second; };
    EXPECT_TRUE(has_finding(check(), "SidecarMissing"));

    json meta = {{"figure", "outputs/fig.svg"}, {"kind", "line"}, {"title", "T"}, {"x_label", "year"},
                 {"x_units", "yr"}, {"y_label", "tas"}, {"y_units", "K"}};
    write_json_file(ws.root() / "outputs" / "fig.meta.json", meta);
    EXPECT_TRUE(check().passed);
    meta["title"] = " ";
    write_json_file(ws.root() / "outputs" / "fig.meta.json", meta);
    EXPECT_TRUE(has_finding(check(), "TitleMissing"));
    meta["title"] = "T";
    meta.erase("y_units");
    write_json_file(ws.root() / "outputs" / "fig.meta.json", meta);
    EXPECT_TRUE(has_finding(check(), "AxisUnitsMissing"));
    meta.erase("x_label");
    write_json_file(ws.root() / "outputs" / "fig.meta.json", meta);
    EXPECT_TRUE(has_finding(check(), "AxisLabelMissing"));
    std::ofstream(ws.root() / "outputs" / "fig.svg", std::ios::trunc);
    EXPECT_TRUE(has_finding(check(), "FigureEmpty"));
}

TEST(DebugLoop, ConvergesAtScriptedRound) {
    for (int r : {1, 3}) {
        Fixture f;
        auto task = simple_task("fixme");
        test::script_debug_fix(f.mg, "fixme", r);
        auto outcome = f.lab().run_task(task, f.workspace(task), false);
        EXPECT_TRUE(outcome.validated());
        EXPECT_EQ(int(outcome.transcript.rounds.size()), r);
        EXPECT_EQ(int(outcome.artifacts.size()), r + 1);
        EXPECT_EQ(outcome.final_artifact().revision, r);
        EXPECT_EQ(f.count("debug_round"), r);
        for (int i = 0; i < r; ++i)
            EXPECT_NE(outcome.transcript.rounds[i].error_excerpt.find("NameError"), std::string::npos);
    }
}

TEST(DebugLoop, NoRoundsWhenFirstAttemptWorks) {
    Fixture f;
    auto task = simple_task("fine");
    f.mg.route("lab.codegen", {"task: fine\n"}, test::fenced_sh(test::valid_script()));
    auto outcome = f.lab().run_task(task, f.workspace(task), false);
    EXPECT_TRUE(outcome.validated());
    EXPECT_TRUE(outcome.transcript.rounds.empty());
}

TEST(DebugLoop, CapExhausted) {
    Fixture f;
    auto task = simple_task("stuck");
    test::script_debug_fix(f.mg, "stuck", 3);
    try {
        f.lab(2).run_task(task, f.workspace(task), false);
        FAIL();
    } catch (const DebugExhaustedError& e) {
        EXPECT_EQ(e.code(), Errc::debug_exhausted);
        EXPECT_EQ(e.transcript().rounds.size(), 2u);
        EXPECT_EQ(e.transcript().cap, 2);
        EXPECT_EQ(e.artifacts().size(), 3u);
    }
    EXPECT_EQ(f.count("debug_exhausted"), 1);
}

TEST(DebugLoop, ValidatorRejectionsCountAgainstCap) {
    Fixture f;
    auto task = simple_task("hot");
    f.mg.route("lab.codegen", {"task: hot\n"}, test::fenced_sh(test::valid_script(900.0)));
    f.mg.route("lab.debug", {"task: hot\n"}, test::fenced_sh(test::valid_script(900.0)));
    f.mg.route("lab.debug", {"task: hot\n", "revision: 2\n", "Implausible"}, test::fenced_sh(test::valid_script(288.0)));
    auto outcome = f.lab(5).run_task(task, f.workspace(task), false);
    EXPECT_TRUE(outcome.validated());
    EXPECT_EQ(outcome.transcript.rounds.size(), 2u);
}

TEST(DebugLoop, InvalidCap) {
    Fixture f;
    auto task = simple_task("x");
    EXPECT_EQ(code_of([&] { f.lab().run_debug_loop(task, artifact("x", "true"), ExecutionResult{}, f.workspace(task), false, 0); }),
              Errc::invalid_argument);
}

TEST(Promotion, ApprovalDraftAndRejection) {
    Fixture f;
    auto task = simple_task("good", "toy diagnostic for promotion");
    f.mg.route("lab.codegen", {"task: good\n"}, test::fenced_sh(test::valid_script()));
    auto lab = f.lab();
    auto outcome = lab.run_task(task, f.workspace(task), false);
    ASSERT_TRUE(outcome.validated());

    ReviewDecision no{"bob", false, std::nullopt, "", "run-1"};
    EXPECT_FALSE(lab.promote_on_success(task, outcome, no, "run-1"));
    EXPECT_TRUE(f.lib.list_records(library::Kind::code_template).empty());

    auto draft = lab.promote_on_success(task, outcome, std::nullopt, "run-1");
    ASSERT_TRUE(draft);
    EXPECT_EQ(f.lib.get(*draft)->status, library::Status::draft);

    ReviewDecision yes{"alice", true, std::nullopt, "", ""};
    auto id = lab.promote_on_success(task, outcome, yes, "run-1");
    ASSERT_TRUE(id);
    EXPECT_EQ(*id, *draft);
    auto rec = *f.lib.get(*id);
    EXPECT_EQ(rec.status, library::Status::validated);
    EXPECT_EQ(rec.run_id, "run-1");
    auto tpl = library::TemplateRecord::from_json(rec.payload);
    EXPECT_EQ(tpl.code, outcome.final_artifact().script_text);
    EXPECT_EQ(tpl.result_digest, outcome.result.digest);

    TaskOutcome failed = outcome;
    failed.data.passed = false;
    EXPECT_FALSE(lab.promote_on_success(task, failed, yes, "run-2"));
}

TEST(EndToEnd, FixturePlanTasksValidateWithRealTools) {
    Fixture f;
    auto plan = fixture_plan();
    auto lab = f.lab();
    auto prepared = lab.run_preprocess(plan, lab.compile_preprocess(plan), f.dir / "prep");
    auto graph = build_task_graph(plan);
    std::map<std::string, fs::path> done;
    for (const auto& id : graph.topo_order) {
        const auto& task = graph.node(id);
        std::map<std::string, fs::path> upstream;
        for (const auto& dep : graph.dependencies(id)) upstream[dep] = done.at(dep);
        auto ws = lab.prepare_workspace(f.dir / "tasks" / id, task, prepared, upstream);
        auto outcome = lab.run_task(task, ws, plan.has_figure(id));
        EXPECT_TRUE(outcome.validated()) << id << ": " << outcome.result.err;
        EXPECT_TRUE(outcome.transcript.rounds.empty()) << id;
        ASSERT_TRUE(outcome.result.manifest);
        EXPECT_EQ((*outcome.result.manifest)["task_id"], id);
        EXPECT_FALSE((*outcome.result.manifest)["figures"].empty()) << id;
        done[id] = ws.root();
    }
    auto clim = read_json_file(done["tas_model_clim"] / "result.json");
    double gm = clim["statistics"][0]["value"];
    EXPECT_GT(gm, 270.0);
    EXPECT_LT(gm, 300.0);
}

TEST(Sanitize, NonFiniteTokensBecomeNull) {
    EXPECT_EQ(json::parse(sanitize_json_numbers(R"({"a":NaN,"b":[Infinity,-Infinity],"c":"NaN"})")),
              json::parse(R"({"a":null,"b":[null,null],"c":"NaN"})"));
}
