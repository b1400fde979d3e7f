#include "climagent/http_api.hpp"

#include <httplib.h>

#include "climagent/error.hpp"

namespace climagent::service {

int http_status(Errc code) {
    switch (code) {
        case Errc::unknown_run:
        case Errc::unknown_task:
        case Errc::missing_file:
            return 404;
        case Errc::wrong_stage:
        case Errc::run_active:
        case Errc::illegal_transition:
        case Errc::duplicate_id_conflict:
            return 409;
        case Errc::persistence_failure:
        case Errc::backend_failure:
        case Errc::sandbox_setup_failure:
            return 500;
        default:
            return 400;
    }
}

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        fail(Errc::parse_error, std::string("request body: ") + e.what());
    }
}

// Wraps a handler so Error and JSON failures become structured responses.
template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const Error& e) {
            send_json(res, {{"error", std::string(to_string(e.code()))}, {"message", e.what()}}, http_status(e.code()));
        } catch (const json::exception& e) {
            send_json(res, {{"error", "ParseError"}, {"message", e.what()}}, 400);
        } catch (const std::exception& e) {
            send_json(res, {{"error", "Internal"}, {"message", e.what()}}, 500);
        }
    };
}

long long int_param(const std::string& name, const std::string& v) {
    try {
        std::size_t used = 0;
        auto n = std::stoll(v, &used);
        if (used == v.size()) return n;
    } catch (const std::exception&) {
    }
    fail(Errc::parse_error, "query parameter " + name + " must be an integer, got '" + v + "'");
}

catalog::CatalogQuery query_from_params(const httplib::Request& req) {
    json q = json::object();
    for (const auto& [k, v] : req.params) {
        if (k == "limit") {
            q[k] = int_param(k, v);
        } else if (k == "covers") {
            auto dash = v.find('-');
            if (dash == std::string::npos) fail(Errc::invalid_argument, "covers must be START-END");
            q[k] = {int_param(k, v.substr(0, dash)), int_param(k, v.substr(dash + 1))};
        } else {
            q[k] = v;
        }
    }
    return catalog::CatalogQuery::from_json(q);
}

}  // namespace

HttpApi::HttpApi(Services& services) : s_(services), server_(std::make_unique<httplib::Server>()) { routes(); }

HttpApi::~HttpApi() { stop(); }

void HttpApi::routes() {
    auto& srv = *server_;
    auto& orch = *s_.orchestrator;

    srv.Post("/runs", guarded([&](const httplib::Request& req, httplib::Response& res) {
        auto body = parse_body(req);
        auto query = planner::UserQuery::from_json(body);
        auto opts_j = body.value("options", json::object());
        RunOptions defaults;
        defaults.worker_count = s_.config.worker_count;
        defaults.expert_count = s_.config.expert_count;
        auto merged = defaults.to_json();
        merged.update(opts_j);
        auto id = orch.create_run(query, RunOptions::from_json(merged));
        send_json(res, {{"run_id", id}, {"stage", orch.state(id).stage_label()}}, 201);
    }));

    srv.Get("/runs", guarded([&](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& id : s_.store->list_runs()) {
            auto st = s_.store->state(id);
            out.push_back({{"run_id", id}, {"stage", st.stage_label()}, {"query", st.query.text}});
        }
        send_json(res, out);
    }));

    srv.Get(R"(/runs/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
        send_json(res, orch.state(req.matches[1]).to_json());
    }));

    srv.Get(R"(/runs/([^/]+)/events)", guarded([&](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        std::uint64_t from = req.has_param("from") ? std::uint64_t(std::max(1LL, int_param("from", req.get_param_value("from")))) : 1;
        (void)orch.state(id);  // unknown_run before any streaming starts
        const bool sse = req.get_header_value("Accept").find("text/event-stream") != std::string::npos ||
                         req.get_param_value("stream") == "1";
        if (!sse) {
            json out = json::array();
            for (const auto& e : s_.store->events(id, from)) out.push_back(e.to_json());
            send_json(res, out);
            return;
        }
        auto* o = &orch;
        res.set_chunked_content_provider("text/event-stream", [o, id, from](std::size_t, httplib::DataSink& sink) {
            o->stream_events(id, from, [&](const Event& e) {
                std::string frame = "id: " + std::to_string(e.seq) + "\nevent: " + e.event_type +
                                    "\ndata: " + e.to_json().dump() + "\n\n";
                return sink.is_writable() && sink.write(frame.data(), frame.size());
            });
            sink.done();
            return true;
        });
    }));

    srv.Post(R"(/runs/([^/]+)/review)", guarded([&](const httplib::Request& req, httplib::Response& res) {
        auto d = ReviewDecision::from_json(parse_body(req));
        auto stage = orch.submit_review(req.matches[1], d);
        send_json(res, {{"stage", std::string(to_string(stage))}});
    }));

    srv.Post(R"(/runs/([^/]+)/cancel)", guarded([&](const httplib::Request& req, httplib::Response& res) {
        orch.cancel(req.matches[1]);
        send_json(res, {{"stage", orch.state(req.matches[1]).stage_label()}});
    }));

    srv.Post(R"(/runs/([^/]+)/tasks/([^/]+)/verdict)", guarded([&](const httplib::Request& req, httplib::Response& res) {
        auto d = ReviewDecision::from_json(parse_body(req));
        send_json(res, orch.submit_verdict(req.matches[1], req.matches[2], d));
    }));

    auto report_route = [&](const char* name) {
        return guarded([&, name](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            auto body = json::parse(s_.store->read_artifact(id, std::string("report/") + name + ".json"));
            body["markdown"] = s_.store->read_artifact(id, std::string("report/") + name + ".md");
            send_json(res, body);
        });
    };
    srv.Get(R"(/runs/([^/]+)/report)", report_route("report"));
    srv.Get(R"(/runs/([^/]+)/committee)", report_route("committee"));

    srv.Get("/catalog/query", guarded([&](const httplib::Request& req, httplib::Response& res) {
        json out = json::array();
        for (const auto& d : s_.catalog->query(query_from_params(req))) out.push_back(d.to_json());
        send_json(res, out);
    }));

    srv.Get("/library/records", guarded([&](const httplib::Request& req, httplib::Response& res) {
        std::optional<library::Kind> kind;
        std::optional<library::Status> status;
        if (req.has_param("kind")) kind = library::kind_from_string(req.get_param_value("kind"));
        if (req.has_param("status")) status = library::status_from_string(req.get_param_value("status"));
        json out = json::array();
        for (const auto& r : s_.library->list_records(kind, status)) {
            auto j = r.to_json();
            j.erase("embedding");
            out.push_back(j);
        }
        send_json(res, out);
    }));

    srv.Post("/library/records", guarded([&](const httplib::Request& req, httplib::Response& res) {
        auto rec = library::KnowledgeRecord::from_json(parse_body(req));
        auto id = s_.library->index_record(rec);
        send_json(res, {{"id", id}}, 201);
    }));

    srv.Post("/eval/scores", guarded([&](const httplib::Request& req, httplib::Response& res) {
        auto body = parse_body(req);
        json rows = body.is_array() ? body : json::array({body});
        for (const auto& r : rows) {
            eval::ReviewerScore sc;
            sc.task_id = r.at("task_id").get<std::string>();
            sc.reviewer = r.at("reviewer").get<std::string>();
            sc.dimension = eval::dimension_from_string(r.at("dimension").get<std::string>());
            sc.value = r.at("value").get<int>();
            s_.scores->record_score(sc);
        }
        send_json(res, {{"recorded", rows.size()}, {"total", s_.scores->size()}});
    }));

    srv.Get("/eval/report", guarded([&](const httplib::Request&, httplib::Response& res) {
        auto cards = s_.scores->scorecards();
        auto report = eval::suite_report(s_.scores->suite(), cards);
        auto j = report.to_json();
        json sc = json::array();
        for (const auto& c : cards) sc.push_back(c.to_json());
        j["scorecards"] = sc;
        send_json(res, j);
    }));
}

int HttpApi::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = server_->bind_to_any_port(host);
    } else if (!server_->bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) fail(Errc::invalid_argument, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    return bound;
}

void HttpApi::listen(const std::string& host, int port) {
    if (!server_->listen(host, port)) fail(Errc::invalid_argument, "cannot listen on " + host + ":" + std::to_string(port));
}

void HttpApi::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace climagent::service
