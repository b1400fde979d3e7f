// climagent: service, run driver and maintenance commands.

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "climagent/archive.hpp"
#include "climagent/error.hpp"
#include "climagent/http_api.hpp"
#include "climagent/orchestrator.hpp"

using namespace climagent;
using namespace climagent::service;

namespace {

fs::path exe_dir(const char* argv0) {
    std::error_code ec;
    auto self = fs::read_symlink("/proc/self/exe", ec);
    if (!ec) return self.parent_path();
    return fs::absolute(argv0).parent_path();
}

void print_state_summary(const RunState& st) {
    std::cout << "run " << st.run_id << ": " << st.stage_label() << "\n";
    if (!st.error.empty()) std::cout << "error: " << st.error << "\n";
    for (const auto& [id, t] : st.tasks) std::cout << "  task " << id << ": " << t.status << "\n";
    for (const auto& [name, digest] : st.artifacts)
        if (name.starts_with("report/") || name.ends_with(".svg"))
            std::cout << "  artifact " << name << " " << digest.substr(0, 12) << "\n";
}

int exit_code_for(const RunState& st) {
    return st.stage == Stage::failed || st.stage == Stage::cancelled ? 1 : 0;
}

ReviewDecision decision_from(bool approve, bool reject, const std::string& reviewer, const std::string& comment,
                             const std::string& edits_file) {
    if (approve == reject) fail(Errc::invalid_argument, "pass exactly one of --approve or --reject");
    ReviewDecision d;
    d.approved = approve;
    d.reviewer = reviewer;
    d.comment = comment;
    if (!edits_file.empty()) d.edits = read_json_file(edits_file);
    return d;
}

HttpApi* g_api = nullptr;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Climate analysis agent service"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file;
    app.add_option("--config", config_file, "JSON config file");
    std::map<std::string, std::string> cli_values;
    std::map<std::string, std::string> flag_storage;
    for (const auto& key : config_keys()) {
        auto flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        app.add_option(flag, flag_storage[key], "config override: " + key)->group("Config");
    }

    auto* serve = app.add_subcommand("serve", "Serve the HTTP API");

    std::string query_text;
    bool auto_approve = false;
    int workers = 0, experts = 0;
    std::string topic;
    bool no_wait = false;
    auto* run = app.add_subcommand("run", "Start a run and drive it as far as possible");
    run->add_option("--query", query_text, "analysis request")->required();
    run->add_flag("--auto-approve", auto_approve, "approve the proposed plan without review");
    run->add_option("--workers", workers, "parallel task workers");
    run->add_option("--experts", experts, "committee size");
    run->add_option("--topic", topic, "committee topic (defaults to the query)");
    run->add_flag("--no-wait", no_wait, "return after creating the run");

    std::string run_id, task_id, reviewer = "operator", comment, edits_file;
    bool approve = false, reject = false;
    auto* review = app.add_subcommand("review", "Approve or reject a proposed plan");
    review->add_option("run_id", run_id)->required();
    review->add_flag("--approve", approve);
    review->add_flag("--reject", reject);
    review->add_option("--comment", comment);
    review->add_option("--reviewer", reviewer);
    review->add_option("--edits", edits_file, "JSON Patch file applied before approval");

    auto* verdict = app.add_subcommand("verdict", "Record a human verdict on a task's outputs");
    verdict->add_option("run_id", run_id)->required();
    verdict->add_option("task_id", task_id)->required();
    verdict->add_flag("--approve", approve);
    verdict->add_flag("--reject", reject);
    verdict->add_option("--comment", comment);
    verdict->add_option("--reviewer", reviewer);

    std::string out_file, out_dir;
    auto* export_cmd = app.add_subcommand("export", "Export a terminal run as a tar archive or directory");
    export_cmd->add_option("run_id", run_id)->required();
    export_cmd->add_option("--out", out_file, "tar archive path");
    export_cmd->add_option("--dir", out_dir, "directory to copy artifacts into");

    auto* status = app.add_subcommand("status", "Print a run's state");
    status->add_option("run_id", run_id)->required();

    std::uint64_t from_seq = 1;
    bool follow = false;
    auto* events = app.add_subcommand("events", "Print a run's event log as JSON lines");
    events->add_option("run_id", run_id)->required();
    events->add_option("--from", from_seq);
    events->add_flag("--follow", follow, "tail until the run is terminal");

    auto* resume = app.add_subcommand("resume", "Continue runs interrupted by a restart");

    auto* eval = app.add_subcommand("eval", "Evaluation suite and scores");
    eval->require_subcommand(1);
    auto* eval_load = eval->add_subcommand("load", "Summarize the task suite");
    std::string dim;
    int value = 0;
    auto* eval_score = eval->add_subcommand("score", "Append a reviewer score to the scores file");
    eval_score->add_option("--task", task_id)->required();
    eval_score->add_option("--reviewer", reviewer)->required();
    eval_score->add_option("--dimension", dim)->required();
    eval_score->add_option("--value", value)->required();
    bool as_json = false;
    auto* eval_report = eval->add_subcommand("report", "Suite report from the recorded scores");
    eval_report->add_flag("--json", as_json);

    auto* lib = app.add_subcommand("library", "Knowledge, tool and template library");
    lib->require_subcommand(1);
    std::string kind, lstatus, record_id, seed_file;
    auto* lib_list = lib->add_subcommand("list", "List records");
    lib_list->add_option("--kind", kind);
    lib_list->add_option("--status", lstatus);
    auto* lib_promote = lib->add_subcommand("promote", "Approve a draft template");
    lib_promote->add_option("record_id", record_id)->required();
    lib_promote->add_option("--reviewer", reviewer);
    auto* lib_seed = lib->add_subcommand("seed", "Index seed records from a JSON-lines file");
    lib_seed->add_option("file", seed_file)->required();

    auto* cat = app.add_subcommand("catalog", "Dataset catalog");
    cat->require_subcommand(1);
    std::map<std::string, std::string> facets;
    auto* cat_query = cat->add_subcommand("query", "Query by facets");
    for (const char* f : {"activity", "experiment", "source_model", "ensemble_member", "variable", "frequency", "units"}) {
        auto flag = std::string("--") + f;
        std::replace(flag.begin(), flag.end(), '_', '-');
        cat_query->add_option(flag, facets[f]);
    }
    std::string covers;
    cat_query->add_option("--covers", covers, "START-END");

    bool overwrite = false;
    auto* data = app.add_subcommand("data", "Synthetic fixture grids");
    data->require_subcommand(1);
    auto* data_gen = data->add_subcommand("generate", "Write the grid file behind every catalog row");
    data_gen->add_flag("--overwrite", overwrite);

    CLI11_PARSE(app, argc, argv);

    try {
        for (const auto& [k, v] : flag_storage)
            if (!v.empty()) cli_values[k] = v;
        auto config = load_config(config_file.empty() ? std::nullopt : std::optional<fs::path>(config_file),
                                  process_env, cli_values);

        if (*data_gen) {
            auto catalog = catalog::Catalog::load(config.catalog_index, config.data_root);
            auto n = catalog::generate_fixture_data(catalog, overwrite);
            std::cout << "wrote " << n << " grid files under " << config.data_root << "\n";
            return 0;
        }
        if (*cat_query) {
            json q = json::object();
            for (const auto& [k, v] : facets)
                if (!v.empty()) q[k] = v;
            if (!covers.empty()) {
                auto dash = covers.find('-');
                q["covers"] = {std::stoi(covers.substr(0, dash)), std::stoi(covers.substr(dash + 1))};
            }
            auto catalog = catalog::Catalog::load(config.catalog_index, config.data_root);
            for (const auto& d : catalog.query(catalog::CatalogQuery::from_json(q))) std::cout << d.to_json().dump() << "\n";
            return 0;
        }

        auto services = make_services(config, exe_dir(argv[0]));
        auto& orch = *services->orchestrator;

        if (*serve) {
            orch.resume();
            HttpApi api(*services);
            g_api = &api;
            std::signal(SIGINT, [](int) {
                if (g_api) g_api->stop();
            });
            std::signal(SIGTERM, [](int) {
                if (g_api) g_api->stop();
            });
            std::cerr << "listening on " << config.host << ":" << config.port << "\n";
            api.listen(config.host, config.port);
            g_api = nullptr;
            return 0;
        }
        if (*run) {
            planner::UserQuery q;
            q.text = query_text;
            RunOptions opts;
            opts.auto_approve = auto_approve;
            opts.worker_count = workers > 0 ? workers : config.worker_count;
            opts.expert_count = experts > 0 ? experts : config.expert_count;
            opts.topic = topic;
            auto id = orch.create_run(q, opts);
            std::cout << id << "\n";
            if (no_wait) return 0;
            auto st = orch.wait_idle(id);
            print_state_summary(st);
            if (st.stage == Stage::awaiting_review && st.proposed_plan)
                std::cout << st.proposed_plan->to_json().dump(2) << "\n";
            return exit_code_for(st);
        }
        if (*review) {
            auto d = decision_from(approve, reject, reviewer, comment, edits_file);
            d.run_ref = run_id;
            orch.submit_review(run_id, d);
            auto st = orch.wait_idle(run_id);
            print_state_summary(st);
            if (st.stage == Stage::awaiting_review && st.proposed_plan)
                std::cout << st.proposed_plan->to_json().dump(2) << "\n";
            return exit_code_for(st);
        }
        if (*verdict) {
            auto d = decision_from(approve, reject, reviewer, comment, "");
            d.run_ref = run_id;
            std::cout << orch.submit_verdict(run_id, task_id, d).dump(2) << "\n";
            return 0;
        }
        if (*export_cmd) {
            if (out_file.empty() && out_dir.empty()) fail(Errc::invalid_argument, "pass --out or --dir");
            if (!out_file.empty())
                std::cout << "wrote " << orch.export_artifacts(run_id, out_file) << " entries to " << out_file << "\n";
            if (!out_dir.empty()) {
                auto entries = archive::read_tar(orch.export_archive(run_id));
                for (const auto& e : entries) {
                    auto path = fs::path(out_dir) / e.name;
                    fs::create_directories(path.parent_path());
                    write_file_atomic(path, e.bytes);
                }
                std::cout << "unpacked " << entries.size() << " entries into " << out_dir << "\n";
            }
            return 0;
        }
        if (*status) {
            std::cout << orch.state(run_id).to_json().dump(2) << "\n";
            return 0;
        }
        if (*events) {
            if (follow) {
                orch.stream_events(run_id, from_seq, [](const Event& e) {
                    std::cout << e.to_json().dump() << std::endl;
                    return true;
                });
            } else {
                for (const auto& e : services->store->events(run_id, from_seq)) std::cout << e.to_json().dump() << "\n";
            }
            return 0;
        }
        if (*resume) {
            auto active = orch.resume();
            std::cout << "resumed " << active << " runs\n";
            for (const auto& id : services->store->list_runs()) {
                auto st = orch.wait_idle(id);
                if (is_active(st.stage)) print_state_summary(st);
            }
            return 0;
        }
        if (*eval_load) {
            const auto& suite = services->scores->suite();
            std::map<eval::Level, int> counts;
            for (const auto& t : suite) ++counts[t.level];
            std::cout << suite.size() << " tasks";
            for (const auto& [lvl, n] : counts) std::cout << "  " << eval::to_string(lvl) << "=" << n;
            std::cout << "\n";
            return 0;
        }
        if (*eval_score) {
            eval::ReviewerScore s{task_id, reviewer, eval::dimension_from_string(dim), value};
            services->scores->record_score(s);
            bool fresh = !fs::exists(config.scores) || fs::file_size(config.scores) == 0;
            std::ofstream f(config.scores, std::ios::app);
            if (fresh) f << "task_id,reviewer,dimension,value\n";
            f << task_id << "," << reviewer << "," << dim << "," << value << "\n";
            std::cout << "recorded\n";
            return 0;
        }
        if (*eval_report) {
            auto cards = services->scores->scorecards();
            auto rep = eval::suite_report(services->scores->suite(), cards);
            if (as_json) {
                std::cout << rep.to_json().dump(2) << "\n";
            } else {
                std::cout << rep.text();
            }
            return 0;
        }
        if (*lib_list) {
            std::optional<library::Kind> k;
            std::optional<library::Status> s;
            if (!kind.empty()) k = library::kind_from_string(kind);
            if (!lstatus.empty()) s = library::status_from_string(lstatus);
            for (const auto& r : services->library->list_records(k, s))
                std::cout << r.id << "\t" << library::to_string(r.kind) << "\t" << library::to_string(r.status) << "\t"
                          << library::to_string(r.provenance) << "\t" << r.summary << "\n";
            return 0;
        }
        if (*lib_promote) {
            auto rec = services->library->get(record_id);
            if (!rec) fail(Errc::unknown_task, "no library record " + record_id);
            if (rec->kind != library::Kind::code_template)
                fail(Errc::invalid_argument, record_id + " is not a code template");
            ReviewDecision d;
            d.approved = true;
            d.reviewer = reviewer;
            d.run_ref = rec->run_id;
            services->library->promote_template(library::TemplateRecord::from_json(rec->payload), d, record_id);
            std::cout << "promoted " << record_id << "\n";
            return 0;
        }
        if (*lib_seed) {
            fs::path tools = config.tools_binary.empty() ? exe_dir(argv[0]) / "climate-tools" : fs::path(config.tools_binary);
            std::cout << "indexed " << services->library->seed_from(seed_file, tools.parent_path()) << " records\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
