#include "climagent/lab.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "climagent/numerics.hpp"
#include "climagent/sandbox.hpp"

namespace climagent::lab {

namespace {

constexpr const char* kCodegenRole =
    "You write one self-contained analysis script for a diagnostic task. It runs as "
    "`<interpreter> script --workspace <dir>`, reads inputs/, writes outputs/ and a result.json manifest, "
    "and one <figure>.meta.json sidecar per figure. Reply with one ```sh or ```python block.";

constexpr const char* kDebugRole =
    "You repair a failing analysis script. Reply with the complete corrected script in one ```sh or "
    "```python block.";

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

numerics::YearRange parse_years(const json& v, const std::string& what) {
    try {
        if (v.is_array() && v.size() == 2) return {v[0].get<int>(), v[1].get<int>()};
        if (v.is_object()) return {v.at("start").get<int>(), v.at("end").get<int>()};
        if (v.is_string()) {
            auto s = v.get<std::string>();
            // accept "1985-2014", "1985–2014" and "1985:2014"
            std::string digits;
            std::vector<int> years;
            for (std::size_t i = 0; i <= s.size(); ++i) {
                if (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
                    digits += s[i];
                } else if (!digits.empty()) {
                    years.push_back(std::stoi(digits));
                    digits.clear();
                }
            }
            if (years.size() == 2) return {years[0], years[1]};
        }
    } catch (const json::exception&) {
    }
    fail(Errc::no_tool_for_step, "cannot bind year range for " + what + ": " + v.dump());
}

std::string years_arg(numerics::YearRange r) { return std::to_string(r.start) + "-" + std::to_string(r.end); }

std::string normalize_units(std::string u) {
    if (u == "°C" || u == "C" || u == "deg C" || u == "celsius") return "degC";
    return u;
}

double number_param(const json& params, const char* key, const std::string& op) {
    if (!params.contains(key) || !params[key].is_number())
        fail(Errc::no_tool_for_step, op + " needs numeric parameter '" + key + "'");
    return params[key].get<double>();
}

// Code fence -> (runtime tag, body).
std::optional<std::pair<std::string, std::string>> extract_script(const std::string& text) {
    if (auto s = extract_fenced(text, {"sh", "bash", "shell"})) return std::make_pair(std::string("sh"), *s);
    if (auto s = extract_fenced(text, {"python", "python3", "py"})) return std::make_pair(std::string("python3"), *s);
    return std::nullopt;
}

std::string tail(const std::string& s, std::size_t n) { return s.size() <= n ? s : s.substr(s.size() - n); }

std::string error_context(const ExecutionResult& r) {
    std::ostringstream os;
    if (r.status == ExecStatus::timeout) {
        os << "execution timed out after " << r.wall_seconds << " s\n";
    } else {
        os << "exit code " << r.exit_code << "\n";
    }
    os << tail(r.err, 2000);
    return os.str();
}

std::string findings_context(const ValidationVerdict& d, const ValidationVerdict& f) {
    std::ostringstream os;
    os << "outputs failed validation\n";
    for (const auto* v : {&d, &f})
        for (const auto& x : v->findings)
            if (x.failure) os << "- [" << v->validator << "] " << x.check << ": " << x.message << "\n";
    return os.str();
}

void copy_tree_contents(const fs::path& from, const fs::path& to) {
    fs::create_directories(to);
    if (!fs::exists(from)) return;
    fs::copy(from, to, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
}

bool has_nonfinite(const json& j) {
    if (j.is_null()) return true;
    if (j.is_number_float()) return !std::isfinite(j.get<double>());
    if (j.is_array()) return std::any_of(j.begin(), j.end(), [](const json& x) { return has_nonfinite(x); });
    return false;
}

}  // namespace

json ToolInvocation::to_json() const {
    return {{"op", op}, {"dataset", dataset}, {"tool", tool}, {"entrypoint", entrypoint.string()}, {"args", args}};
}

const planner::DiagnosticTask& TaskGraph::node(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return n;
    fail(Errc::unknown_task, "no task " + id);
}

std::vector<std::string> TaskGraph::dependencies(const std::string& id) const {
    std::vector<std::string> deps;
    for (const auto& [from, to] : edges)
        if (to == id) deps.push_back(from);
    return deps;
}

TaskGraph build_task_graph(const planner::Plan& plan) {
    TaskGraph g;
    std::set<std::string> ids;
    for (const auto& t : plan.diagnostics) {
        if (!ids.insert(t.id).second) fail(Errc::invariant_violation, "duplicate task id " + t.id);
        g.nodes.push_back(t);
    }
    std::map<std::string, int> indegree;
    for (const auto& t : plan.diagnostics) {
        indegree[t.id];
        for (const auto& d : t.depends_on) {
            if (!ids.count(d)) fail(Errc::invariant_violation, t.id + " depends on unknown task " + d);
            if (d == t.id) fail(Errc::cycle_detected, "task " + t.id + " depends on itself");
            g.edges.emplace_back(d, t.id);
            ++indegree[t.id];
        }
    }
    // Kahn, picking ready nodes in plan order.
    std::vector<bool> done(g.nodes.size(), false);
    while (g.topo_order.size() < g.nodes.size()) {
        bool progressed = false;
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            if (done[i] || indegree[g.nodes[i].id] != 0) continue;
            done[i] = true;
            progressed = true;
            g.topo_order.push_back(g.nodes[i].id);
            for (const auto& [from, to] : g.edges)
                if (from == g.nodes[i].id) --indegree[to];
            break;
        }
        if (!progressed) {
            std::string stuck;
            for (std::size_t i = 0; i < g.nodes.size(); ++i)
                if (!done[i]) stuck += (stuck.empty() ? "" : ", ") + g.nodes[i].id;
            fail(Errc::cycle_detected, "cycle among tasks: " + stuck);
        }
    }
    return g;
}

std::string_view to_string(ArtifactSource s) {
    return s == ArtifactSource::template_adapted ? "template_adapted" : "generated";
}

std::string_view to_string(ExecStatus s) {
    switch (s) {
        case ExecStatus::ok: return "ok";
        case ExecStatus::error: return "error";
        case ExecStatus::timeout: return "timeout";
    }
    return "error";
}

json CodeArtifact::to_json() const {
    json j = {{"task_id", task_id},   {"script_text", script_text},          {"runtime_tag", runtime_tag},
              {"revision", revision}, {"source", std::string(to_string(source))}};
    if (!template_id.empty()) {
        j["template_id"] = template_id;
        j["template_score"] = template_score;
    }
    return j;
}

json ExecutionResult::to_json() const {
    json j = {{"status", std::string(to_string(status))},
              {"exit_code", exit_code},
              {"stdout", out},
              {"stderr", err},
              {"produced_files", produced_files},
              {"digest", digest},
              {"wall_seconds", wall_seconds},
              {"confined", confined}};
    if (manifest) j["result_manifest"] = *manifest;
    return j;
}

json ValidationVerdict::to_json() const {
    json f = json::array();
    for (const auto& x : findings) f.push_back({{"check", x.check}, {"message", x.message}, {"failure", x.failure}});
    return {{"validator", validator}, {"passed", passed}, {"findings", f}};
}

json DebugTranscript::to_json() const {
    json r = json::array();
    for (const auto& x : rounds)
        r.push_back({{"error_excerpt", x.error_excerpt}, {"revision", x.revision}, {"status", x.status}});
    return {{"task_id", task_id}, {"rounds", r}, {"cap", cap}};
}

std::string output_digest(const fs::path& workspace) {
    std::vector<std::pair<std::string, fs::path>> files;
    auto outputs = workspace / "outputs";
    if (fs::exists(outputs)) {
        for (const auto& e : fs::recursive_directory_iterator(outputs))
            if (e.is_regular_file()) files.emplace_back(e.path().lexically_relative(workspace).generic_string(), e.path());
    }
    if (fs::exists(workspace / "result.json")) files.emplace_back("result.json", workspace / "result.json");
    std::sort(files.begin(), files.end());
    std::string blob;
    for (const auto& [rel, path] : files) {
        auto body = read_file(path);
        blob += rel;
        blob.push_back('\0');
        blob += std::to_string(body.size());
        blob.push_back('\0');
        blob += body;
    }
    return sha256_hex(blob);
}

std::string sanitize_json_numbers(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool in_string = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            out.push_back(c);
            if (c == '\\' && i + 1 < text.size()) {
                out.push_back(text[++i]);
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
            out.push_back(c);
            continue;
        }
        auto starts = [&](std::string_view tok) { return text.compare(i, tok.size(), tok) == 0; };
        if (starts("-Infinity")) {
            out += "null";
            i += 8;
        } else if (starts("Infinity")) {
            out += "null";
            i += 7;
        } else if (starts("NaN")) {
            out += "null";
            i += 2;
        } else {
            out.push_back(c);
        }
    }
    return out;
}

Lab::Lab(const AgentClient& agent, library::Library& library, const catalog::Catalog& catalog, LabConfig config)
    : agent_(agent), library_(library), catalog_(catalog), config_(std::move(config)) {}

fs::path Lab::resolve_entrypoint(const std::string& entrypoint) const {
    fs::path p(entrypoint);
    if (p.is_relative() && !config_.tools_binary.empty()) p = config_.tools_binary.parent_path() / p;
    return p;
}

std::optional<library::ToolManifest> Lab::find_tool(const std::string& name) const {
    for (const auto& r : library_.list_records(library::Kind::tool_doc, library::Status::validated)) {
        auto m = library::ToolManifest::from_json(r.payload);
        if (m.name == name) return m;
    }
    return std::nullopt;
}

std::vector<ToolInvocation> Lab::compile_preprocess(const planner::Plan& plan) const {
    std::vector<ToolInvocation> out;
    for (const auto& step : plan.preprocessing) {
        const auto& p = step.params;
        std::string tool;
        std::vector<std::string> bound;
        if (step.op == "regrid") {
            tool = "regrid";
            long nlat = 0, nlon = 0;
            if (p.contains("target") && p["target"].is_string()) {
                auto t = to_lower(p["target"].get<std::string>());
                auto x = t.find('x');
                if (x == std::string::npos) fail(Errc::no_tool_for_step, "regrid target must be NLONxNLAT: " + t);
                nlon = std::stol(t.substr(0, x));
                nlat = std::stol(t.substr(x + 1));
            } else {
                nlat = long(number_param(p, "nlat", "regrid"));
                nlon = long(number_param(p, "nlon", "regrid"));
            }
            if (nlat <= 0 || nlon <= 0) fail(Errc::no_tool_for_step, "regrid target must be positive");
            bound = {"--nlat", std::to_string(nlat), "--nlon", std::to_string(nlon)};
        } else if (step.op == "convert_units") {
            tool = "convert-units";
            auto from = normalize_units(p.value("from", ""));
            auto to = normalize_units(p.value("to", ""));
            auto conv = numerics::find_conversion(from, to);
            bound = {"--from", conv.from, "--to", conv.to, "--scale", fmt_double(conv.scale), "--offset",
                     fmt_double(conv.offset)};
        } else if (step.op == "subset_time") {
            tool = "subset-time";
            numerics::YearRange r = p.contains("period") ? parse_years(p["period"], step.op)
                                                         : numerics::YearRange{p.value("start", 0), p.value("end", 0)};
            bound = {"--period", years_arg(r)};
        } else if (step.op == "subset_region") {
            tool = "subset-region";
            for (const char* k : {"lat_min", "lat_max", "lon_min", "lon_max"}) {
                std::string flag = std::string("--") + k;
                std::replace(flag.begin(), flag.end(), '_', '-');
                bound.push_back(flag);
                bound.push_back(fmt_double(number_param(p, k, step.op)));
            }
        } else if (step.op == "statistic") {
            auto stat = p.value("statistic", "");
            if (stat == "mean" || stat == "variance") {
                tool = stat == "mean" ? "time-mean" : "time-variance";
                bound = {"--period", years_arg(parse_years(p.value("period", json()), step.op))};
            } else if (stat == "anomaly") {
                tool = "anomaly-field";
                bound = {"--baseline", years_arg(parse_years(p.value("baseline", json()), step.op))};
            } else {
                fail(Errc::no_tool_for_step, "no tool computes statistic '" + stat + "'");
            }
        } else {
            fail(Errc::no_tool_for_step, "no tool for preprocessing op '" + step.op + "'");
        }
        auto manifest = find_tool(tool);
        if (!manifest) fail(Errc::no_tool_for_step, "tool library has no manifest for '" + tool + "'");
        ToolInvocation inv;
        inv.op = step.op;
        inv.dataset = step.dataset;
        inv.tool = tool;
        inv.entrypoint = resolve_entrypoint(manifest->entrypoint);
        if (!manifest->subcommand.empty()) inv.args.push_back(manifest->subcommand);
        inv.args.insert(inv.args.end(), bound.begin(), bound.end());
        out.push_back(std::move(inv));
    }
    return out;
}

PreparedData Lab::run_preprocess(const planner::Plan& plan, const std::vector<ToolInvocation>& invocations,
                                 const fs::path& dir) const {
    PreparedData prepared;
    fs::create_directories(dir);
    for (const auto& sel : plan.datasets) {
        auto rows = catalog_.query(sel.query);
        if (rows.empty()) fail(Errc::preprocess_failure, "selector '" + sel.label + "' resolves to no dataset");
        auto label_dir = dir / sel.label;
        fs::remove_all(label_dir);
        fs::create_directories(label_dir);
        for (const auto& row : rows) {
            auto src = catalog_.resolve(row);
            auto name = row.source_model + "_" + row.experiment + "_" + row.ensemble_member + "_" + row.variable + "_" +
                        std::string(catalog::to_string(row.frequency)) + ".json";
            auto dst = label_dir / name;
            fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
            for (const auto& inv : invocations) {
                if (inv.dataset != "*" && inv.dataset != sel.label) continue;
                sandbox::ProcessSpec spec;
                spec.argv.push_back(inv.entrypoint.string());
                spec.argv.insert(spec.argv.end(), inv.args.begin(), inv.args.end());
                for (const auto& a : {std::string("--input"), dst.string(), std::string("--output"), dst.string()})
                    spec.argv.push_back(a);
                spec.env = {"PATH=/usr/bin:/bin", "LANG=C"};
                spec.cwd = label_dir;
                spec.timeout = config_.exec_timeout;
                spec.output_cap = config_.output_cap;
                sandbox::Policy policy;
                policy.confine = config_.confine;
                policy.writable = {label_dir};
                policy.readable = sandbox::system_read_paths();
                policy.exec_files = {inv.entrypoint};
                auto r = sandbox::run(spec, policy);
                json entry = inv.to_json();
                entry["file"] = dst.lexically_relative(dir).generic_string();
                entry["exit_code"] = r.exit_code;
                prepared.log.push_back(entry);
                if (r.exit_code != 0 || r.timed_out)
                    fail(Errc::preprocess_failure, inv.tool + " failed on " + name + ": " + tail(r.err, 500));
            }
            prepared.files[sel.label].push_back(dst);
        }
    }
    agent_.emit("preprocess_finished", {{"invocations", prepared.log.size()}});
    return prepared;
}

Workspace Lab::prepare_workspace(const fs::path& base, const planner::DiagnosticTask& task,
                                 const PreparedData& prepared,
                                 const std::map<std::string, fs::path>& upstream_workspaces) const {
    Workspace ws{base};
    fs::remove_all(ws.root());
    fs::remove_all(ws.inputs());
    fs::remove_all(ws.scripts());
    fs::create_directories(ws.root());
    fs::create_directories(ws.inputs());
    fs::create_directories(ws.scripts());
    for (const auto& in : task.inputs) {
        auto target = ws.inputs() / in;
        if (auto it = prepared.files.find(in); it != prepared.files.end()) {
            fs::create_directories(target);
            for (const auto& f : it->second) fs::copy_file(f, target / f.filename(), fs::copy_options::overwrite_existing);
        } else if (auto up = upstream_workspaces.find(in); up != upstream_workspaces.end()) {
            copy_tree_contents(up->second / "outputs", target);
            if (fs::exists(up->second / "result.json"))
                fs::copy_file(up->second / "result.json", target / "result.json", fs::copy_options::overwrite_existing);
        } else {
            fail(Errc::invalid_argument, "task " + task.id + " input '" + in + "' is neither a dataset nor an upstream task");
        }
    }
    fs::create_directory_symlink(fs::absolute(ws.inputs()), ws.root() / "inputs");
    return ws;
}

std::vector<library::ScoredRecord> Lab::retrieve_templates(const planner::DiagnosticTask& task) const {
    return library_.retrieve(agent_.embed(task.description), config_.retrieve_k,
                             {library::Kind::code_template, library::Status::validated});
}

std::string Lab::doc_context(const planner::DiagnosticTask& task) const {
    auto docs = library_.retrieve(agent_.embed(task.description + " " + task.method), config_.retrieve_k,
                                  {library::Kind::tool_doc, library::Status::validated});
    std::ostringstream os;
    for (const auto& d : docs) {
        auto m = library::ToolManifest::from_json(d.record.payload);
        os << "- " << m.name << ": " << m.description << "\n  usage: $CLIMATE_TOOLS " << m.subcommand;
        for (const auto& p : m.params) os << " --" << p.name << " <" << p.type << ">";
        os << "\n";
    }
    return os.str();
}

CodeArtifact Lab::generate_code(const planner::DiagnosticTask& task, const std::vector<library::ScoredRecord>& templates,
                                const std::string& doc_context, bool figure_required) const {
    CodeArtifact a;
    a.task_id = task.id;
    const library::ScoredRecord* best = nullptr;
    if (!templates.empty() && templates.front().score >= config_.template_threshold) best = &templates.front();

    std::ostringstream user;
    user << "task: " << task.id << "\n";
    user << "description: " << task.description << "\n";
    user << "method: " << task.method << "\n";
    user << "inputs:";
    for (const auto& i : task.inputs) user << " inputs/" << i << "/";
    user << "\noutputs:";
    for (const auto& o : task.outputs) user << " " << o;
    user << "\nfigure required: " << (figure_required ? "yes" : "no") << "\n\n";
    user << "Tool documentation:\n" << (doc_context.empty() ? "(none)\n" : doc_context) << "\n";
    if (best) {
        auto tpl = library::TemplateRecord::from_json(best->record.payload);
        char score[16];
        std::snprintf(score, sizeof score, "%.3f", best->score);
        user << "Template " << best->record.id << " (score " << score << "), adapt it to this task:\n```"
             << (tpl.runtime_tag == "python3" ? "python" : "sh") << "\n"
             << tpl.code << "```\n";
    } else {
        user << "Template: none\n";
    }

    auto messages = agent_messages("lab.codegen", kCodegenRole, user.str());
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto resp = agent_.call(messages);
        if (auto script = extract_script(resp.text)) {
            a.runtime_tag = script->first;
            a.script_text = script->second;
            if (best) {
                a.source = ArtifactSource::template_adapted;
                a.template_id = best->record.id;
                a.template_score = best->score;
            }
            agent_.emit("code_generated", {{"task", task.id},
                                           {"revision", 0},
                                           {"source", std::string(to_string(a.source))},
                                           {"template_id", a.template_id}});
            return a;
        }
        messages.push_back({gateway::Role::assistant, resp.text});
        messages.push_back({gateway::Role::user, "No script block found. Reply with one ```sh or ```python block."});
    }
    fail(Errc::code_parse_failure, "task " + task.id + ": model did not return a script");
}

CodeArtifact Lab::revise(const planner::DiagnosticTask& task, const CodeArtifact& previous,
                         const std::string& error_context) const {
    std::ostringstream user;
    user << "task: " << task.id << "\n";
    user << "description: " << task.description << "\n";
    user << "revision: " << previous.revision + 1 << "\n\n";
    user << "error:\n" << error_context << "\n\n";
    user << "script:\n```" << (previous.runtime_tag == "python3" ? "python" : "sh") << "\n"
         << previous.script_text << "```\n";
    auto messages = agent_messages("lab.debug", kDebugRole, user.str());
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto resp = agent_.call(messages);
        if (auto script = extract_script(resp.text)) {
            CodeArtifact next = previous;
            next.runtime_tag = script->first;
            next.script_text = script->second;
            next.revision = previous.revision + 1;
            return next;
        }
        messages.push_back({gateway::Role::assistant, resp.text});
        messages.push_back({gateway::Role::user, "No script block found. Reply with one ```sh or ```python block."});
    }
    fail(Errc::code_parse_failure, "task " + task.id + ": model did not return a revised script");
}

ExecutionResult Lab::execute_artifact(const CodeArtifact& artifact, const Workspace& ws) const {
    auto interp = config_.interpreters.find(artifact.runtime_tag);
    if (interp == config_.interpreters.end())
        fail(Errc::sandbox_setup_failure, "no interpreter for runtime tag '" + artifact.runtime_tag + "'");
    if (!fs::exists(ws.root() / "inputs")) fail(Errc::sandbox_setup_failure, "workspace is not provisioned");

    // Fresh outputs for every revision; inputs stay.
    for (const auto& e : fs::directory_iterator(ws.root()))
        if (e.path().filename() != "inputs") fs::remove_all(e.path());
    fs::create_directories(ws.root() / "outputs");
    fs::create_directories(ws.scripts());
    auto script = ws.scripts() / ("rev" + std::to_string(artifact.revision) +
                                  (artifact.runtime_tag == "python3" ? ".py" : ".sh"));
    write_file_atomic(script, artifact.script_text);

    const auto root = fs::absolute(ws.root());
    sandbox::ProcessSpec spec;
    spec.argv = {interp->second.string(), fs::absolute(script).string(), "--workspace", root.string()};
    spec.env = {"WORKSPACE=" + root.string(),
                "CLIMATE_TOOLS=" + fs::absolute(config_.tools_binary).string(),
                "CLIMAGENT_TASK_ID=" + artifact.task_id,
                "PATH=/usr/local/bin:/usr/bin:/bin",
                "HOME=" + root.string(),
                "TMPDIR=" + root.string(),
                "LANG=C.UTF-8",
                "PYTHONDONTWRITEBYTECODE=1"};
    spec.cwd = root;
    spec.timeout = config_.exec_timeout;
    spec.output_cap = config_.output_cap;
    spec.file_size_limit = config_.file_size_limit;
    sandbox::Policy policy;
    policy.confine = config_.confine;
    policy.writable = {root};
    policy.readable = sandbox::system_read_paths();
    policy.readable.push_back(fs::absolute(ws.inputs()));
    policy.readable.push_back(fs::absolute(ws.scripts()));
    if (!config_.tools_binary.empty()) policy.exec_files.push_back(fs::absolute(config_.tools_binary));

    auto pr = sandbox::run(spec, policy);
    ExecutionResult r;
    r.exit_code = pr.exit_code;
    r.out = std::move(pr.out);
    r.err = std::move(pr.err);
    r.wall_seconds = pr.wall_seconds;
    r.confined = pr.confined;
    if (pr.timed_out) {
        r.status = ExecStatus::timeout;
    } else if (pr.exit_code != 0) {
        r.status = ExecStatus::error;
    } else {
        auto manifest_path = root / "result.json";
        if (!fs::exists(manifest_path)) {
            r.status = ExecStatus::error;
            r.err += "\nresult.json was not written";
        } else {
            try {
                r.manifest = json::parse(sanitize_json_numbers(read_file(manifest_path)));
                r.status = ExecStatus::ok;
            } catch (const json::exception& e) {
                r.status = ExecStatus::error;
                r.err += std::string("\nresult.json is not valid JSON: ") + e.what();
            }
        }
    }
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.path().filename() == "inputs" && e.path().parent_path() == root) continue;
        if (e.is_regular_file() && !e.is_symlink())
            r.produced_files.push_back(e.path().lexically_relative(root).generic_string());
    }
    std::sort(r.produced_files.begin(), r.produced_files.end());
    r.digest = output_digest(root);
    agent_.emit("execution", {{"task", artifact.task_id},
                              {"revision", artifact.revision},
                              {"status", std::string(to_string(r.status))},
                              {"exit_code", r.exit_code},
                              {"confined", r.confined},
                              {"digest", r.digest}});
    return r;
}

std::pair<ValidationVerdict, ValidationVerdict> Lab::validate_outputs(const ExecutionResult& result,
                                                                      const planner::DiagnosticTask& task,
                                                                      const Workspace& ws,
                                                                      bool figure_required) const {
    ValidationVerdict data{"data", true, {}};
    ValidationVerdict figure{"figure", true, {}};
    auto add = [](ValidationVerdict& v, std::string check, std::string msg) {
        v.findings.push_back({std::move(check), std::move(msg), true});
        v.passed = false;
    };
    const auto root = ws.root();

    if (result.status != ExecStatus::ok || !result.manifest || !result.manifest->is_object()) {
        add(data, "ManifestPresent", "no parseable result.json");
        add(figure, "ManifestPresent", "no parseable result.json");
        return {data, figure};
    }
    const json& m = *result.manifest;
    const std::string variable = m.value("variable", "");
    const std::string units = m.value("units", "");
    if (units.empty()) add(data, "UnitsMissing", "manifest declares no units");

    auto outputs = m.value("outputs", json::array());
    if (outputs.empty()) add(data, "NoOutputs", "manifest declares no outputs");
    for (const auto& o : outputs) {
        auto rel = o.value("path", "");
        auto path = root / rel;
        if (rel.empty() || !path_within(root, path) || !fs::is_regular_file(path)) {
            add(data, "DeclaredOutputMissing", "declared output not found: " + rel);
            continue;
        }
        if (path.extension() == ".json") {
            try {
                auto doc = json::parse(sanitize_json_numbers(read_file(path)));
                for (const char* key : {"values", "data"})
                    if (doc.contains(key) && has_nonfinite(doc[key]))
                        add(data, "NonFiniteValue", rel + " contains non-finite values");
                if (doc.contains("units") && doc["units"].is_string() && doc["units"].get<std::string>().empty())
                    add(data, "UnitsMissing", rel + " declares empty units");
            } catch (const json::exception&) {
                add(data, "OutputUnparseable", rel + " is not valid JSON");
            }
        }
    }
    for (const auto& s : m.value("statistics", json::array())) {
        auto name = s.value("name", "?");
        if (!s.contains("value") || has_nonfinite(s["value"]) || !s["value"].is_number()) {
            add(data, "NonFiniteValue", "statistic " + name + " is not a finite number");
            continue;
        }
        auto su = s.value("units", "");
        if (su.empty()) add(data, "UnitsMissing", "statistic " + name + " has no units");
        if (s.value("kind", "") == "level") {
            auto it = config_.plausibility.find(s.value("variable", variable) + "|" + su);
            double v = s["value"].get<double>();
            if (it != config_.plausibility.end() && (v < it->second.lo || v > it->second.hi)) {
                std::ostringstream os;
                os << "statistic " << name << " = " << v << " " << su << " outside [" << it->second.lo << ", "
                   << it->second.hi << "]";
                add(data, "Implausible", os.str());
            }
        }
    }

    auto figures = m.value("figures", json::array());
    if (figure_required && figures.empty()) add(figure, "FigureMissing", "task " + task.id + " must produce a figure");
    for (const auto& f : figures) {
        auto rel = f.value("path", "");
        auto path = root / rel;
        if (rel.empty() || !path_within(root, path) || !fs::is_regular_file(path)) {
            add(figure, "FigureMissing", "figure not found: " + rel);
            continue;
        }
        if (fs::file_size(path) == 0) add(figure, "FigureEmpty", rel + " is empty");
        fs::path side = f.contains("sidecar") ? root / f["sidecar"].get<std::string>()
                                              : path.parent_path() / (path.stem().string() + ".meta.json");
        if (!fs::is_regular_file(side)) {
            add(figure, "SidecarMissing", "no sidecar for " + rel);
            continue;
        }
        json meta;
        try {
            meta = json::parse(read_file(side));
        } catch (const json::exception&) {
            add(figure, "SidecarUnparseable", "sidecar for " + rel + " is not valid JSON");
            continue;
        }
        auto blank = [&](const char* k) { return !meta.contains(k) || !meta[k].is_string() || trim(meta[k].get<std::string>()).empty(); };
        if (blank("title")) add(figure, "TitleMissing", rel + " has no title");
        if (blank("x_label") || blank("y_label")) add(figure, "AxisLabelMissing", rel + " lacks axis labels");
        if (blank("x_units") || blank("y_units")) add(figure, "AxisUnitsMissing", rel + " lacks axis units");
    }
    for (const auto* v : {&data, &figure})
        agent_.emit("validation", {{"task", task.id}, v->to_json()});
    return {data, figure};
}

TaskOutcome Lab::run_debug_loop(const planner::DiagnosticTask& task, CodeArtifact artifact, ExecutionResult first,
                                const Workspace& ws, bool figure_required, int cap) const {
    if (cap < 1) fail(Errc::invalid_argument, "debug cap must be positive");
    TaskOutcome o;
    o.task_id = task.id;
    o.artifacts.push_back(artifact);
    o.transcript = {task.id, {}, cap};
    o.result = std::move(first);
    for (;;) {
        std::string context;
        if (o.result.status == ExecStatus::ok) {
            auto [d, f] = validate_outputs(o.result, task, ws, figure_required);
            o.data = d;
            o.figure = f;
            if (d.passed && f.passed) return o;
            context = findings_context(d, f);
        } else {
            o.data = {"data", false, {{"ExecutionFailed", std::string(to_string(o.result.status)), true}}};
            o.figure = {"figure", false, {}};
            context = error_context(o.result);
        }
        if (int(o.transcript.rounds.size()) >= cap) {
            agent_.emit("debug_exhausted", {{"task", task.id}, {"rounds", o.transcript.rounds.size()}, {"cap", cap}});
            throw DebugExhaustedError("task " + task.id + " still failing after " + std::to_string(cap) + " debug rounds",
                                      o.transcript, o.artifacts);
        }
        auto next = revise(task, o.artifacts.back(), context);
        o.result = execute_artifact(next, ws);
        o.artifacts.push_back(next);
        o.transcript.rounds.push_back({tail(context, 2000), next.revision, std::string(to_string(o.result.status))});
        agent_.emit("debug_round", {{"task", task.id},
                                    {"round", o.transcript.rounds.size()},
                                    {"cap", cap},
                                    {"revision", next.revision},
                                    {"status", std::string(to_string(o.result.status))}});
    }
}

TaskOutcome Lab::run_task(const planner::DiagnosticTask& task, const Workspace& ws, bool figure_required) const {
    auto templates = retrieve_templates(task);
    auto docs = doc_context(task);
    auto artifact = generate_code(task, templates, docs, figure_required);
    auto first = execute_artifact(artifact, ws);
    return run_debug_loop(task, std::move(artifact), std::move(first), ws, figure_required, config_.debug_cap);
}

std::optional<std::string> Lab::promote_on_success(const planner::DiagnosticTask& task, const TaskOutcome& outcome,
                                                   const std::optional<ReviewDecision>& approval,
                                                   const std::string& run_ref) const {
    if (!outcome.validated()) return std::nullopt;
    if (approval && !approval->approved) return std::nullopt;
    library::TemplateRecord triplet;
    triplet.query_text = task.description;
    triplet.code = outcome.final_artifact().script_text;
    triplet.result_digest = outcome.result.digest;
    triplet.runtime_tag = outcome.final_artifact().runtime_tag;
    std::string id;
    if (approval) {
        ReviewDecision d = *approval;
        if (d.run_ref.empty()) d.run_ref = run_ref;
        id = library_.promote_template(triplet, d);
        agent_.emit("template_promoted", {{"task", task.id}, {"template_id", id}});
    } else {
        id = library_.queue_draft(triplet, run_ref);
        agent_.emit("template_drafted", {{"task", task.id}, {"template_id", id}});
    }
    return id;
}

}  // namespace climagent::lab
