#include <gtest/gtest.h>

#include <httplib.h>

#include "climagent/error.hpp"
#include "climagent/http_api.hpp"
#include "service_fixture.hpp"

using namespace climagent;
using namespace climagent::service;

namespace {

struct Server {
    test::TestServices t = test::make_test_services();
    HttpApi api{*t.services};
    int port = api.start("127.0.0.1", 0);
    httplib::Client client{"127.0.0.1", port};

    Server() { client.set_read_timeout(60, 0); }

    json get(const std::string& path, int want = 200) {
        auto r = client.Get(path.c_str());
        EXPECT_TRUE(r) << path;
        if (!r) return nullptr;
        EXPECT_EQ(r->status, want) << path << ": " << r->body;
        return json::parse(r->body);
    }
    json post(const std::string& path, const json& body, int want = 200) {
        auto r = client.Post(path.c_str(), body.dump(), "application/json");
        EXPECT_TRUE(r) << path;
        if (!r) return nullptr;
        EXPECT_EQ(r->status, want) << path << ": " << r->body;
        return json::parse(r->body);
    }

    std::string start_run(bool auto_approve) {
        auto j = post("/runs", {{"text", test::l1_query()}, {"options", {{"auto_approve", auto_approve}}}}, 201);
        return j["run_id"].get<std::string>();
    }
};

// Splits an SSE body into (id, event, data) frames.
std::vector<std::tuple<std::uint64_t, std::string, json>> sse_frames(const std::string& body) {
    std::vector<std::tuple<std::uint64_t, std::string, json>> out;
    std::size_t pos = 0;
    while (pos < body.size()) {
        auto end = body.find("\n\n", pos);
        if (end == std::string::npos) break;
        std::istringstream frame(body.substr(pos, end - pos));
        std::string line, event;
        std::uint64_t id = 0;
        json data;
        while (std::getline(frame, line)) {
            if (line.rfind("id: ", 0) == 0) id = std::stoull(line.substr(4));
            if (line.rfind("event: ", 0) == 0) event = line.substr(7);
            if (line.rfind("data: ", 0) == 0) data = json::parse(line.substr(6));
        }
        out.emplace_back(id, event, data);
        pos = end + 2;
    }
    return out;
}

}  // namespace

TEST(HttpStatus, Mapping) {
    EXPECT_EQ(http_status(Errc::unknown_run), 404);
    EXPECT_EQ(http_status(Errc::unknown_task), 404);
    EXPECT_EQ(http_status(Errc::wrong_stage), 409);
    EXPECT_EQ(http_status(Errc::run_active), 409);
    EXPECT_EQ(http_status(Errc::parse_error), 400);
    EXPECT_EQ(http_status(Errc::out_of_range), 400);
    EXPECT_EQ(http_status(Errc::persistence_failure), 500);
}

TEST(Http, RunLifecycleAndReports) {
    Server s;
    auto id = s.start_run(true);
    auto st = s.t.orch().wait_idle(id);
    ASSERT_EQ(st.stage, Stage::completed) << st.error;

    auto run = s.get("/runs/" + id);
    EXPECT_EQ(run["stage"], "completed");
    EXPECT_EQ(run["run_id"], id);
    auto runs = s.get("/runs");
    ASSERT_EQ(runs.size(), 1u);
    EXPECT_EQ(runs[0]["run_id"], id);

    auto events = s.get("/runs/" + id + "/events");
    ASSERT_EQ(events.size(), st.last_seq);
    for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i]["seq"], i + 1);
    EXPECT_EQ(s.get("/runs/" + id + "/events?from=10").size(), st.last_seq - 9);

    auto report = s.get("/runs/" + id + "/report");
    EXPECT_NE(report["markdown"].get<std::string>().find("## Overall interpretation"), std::string::npos);
    auto committee = s.get("/runs/" + id + "/committee");
    EXPECT_EQ(committee["assessments"].size(), 10u);
    EXPECT_DOUBLE_EQ(committee["sentiment"].get<double>(), 0.4);

    auto v = s.post("/runs/" + id + "/tasks/tas_bias/verdict", {{"reviewer", "r"}, {"approved", true}});
    EXPECT_TRUE(v["template_id"].is_string());
    auto err = s.post("/runs/" + id + "/tasks/ghost/verdict", {{"approved", true}}, 404);
    EXPECT_EQ(err["error"], "UnknownTask");
    err = s.post("/runs/" + id + "/review", {{"approved", true}}, 409);
    EXPECT_EQ(err["error"], "WrongStage");
    s.post("/runs/" + id + "/cancel", json::object(), 409);
}

TEST(Http, EventStreamMatchesLog) {
    Server s;
    auto id = s.start_run(true);
    // Subscribe while the run is still going; the stream ends at the terminal stage.
    httplib::Headers h = {{"Accept", "text/event-stream"}};
    auto r = s.client.Get(("/runs/" + id + "/events").c_str(), h);
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    auto frames = sse_frames(r->body);
    auto st = s.t.orch().wait_idle(id);
    ASSERT_EQ(frames.size(), st.last_seq);
    auto log = s.t.store().events(id);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        EXPECT_EQ(std::get<0>(frames[i]), i + 1);
        EXPECT_EQ(std::get<1>(frames[i]), log[i].event_type);
        EXPECT_EQ(std::get<2>(frames[i]), log[i].to_json());
    }
    // Reconnecting from a later seq resumes without gaps.
    auto again = s.client.Get(("/runs/" + id + "/events?stream=1&from=7").c_str());
    ASSERT_TRUE(again);
    auto tail = sse_frames(again->body);
    ASSERT_EQ(tail.size(), st.last_seq - 6);
    EXPECT_EQ(std::get<0>(tail.front()), 7u);
}

TEST(Http, ReviewRejectAndCancel) {
    Server s;
    auto id = s.start_run(false);
    ASSERT_EQ(s.t.orch().wait_idle(id).stage, Stage::awaiting_review);
    auto j = s.post("/runs/" + id + "/review", {{"reviewer", "r"}, {"approved", false}, {"comment", "drop the trend task"}});
    EXPECT_EQ(j["stage"], "planning");
    auto st = s.t.orch().wait_idle(id);
    ASSERT_EQ(st.stage, Stage::awaiting_review);
    EXPECT_EQ(s.get("/runs/" + id)["reviewer_comments"][0], "drop the trend task");
    auto patch = json::array({{{"op", "remove"}, {"path", "/diagnostics/0"}}});
    auto err = s.post("/runs/" + id + "/review", {{"approved", true}, {"edits", patch}}, 400);
    EXPECT_EQ(err["error"], "PatchInvariantViolation");
    EXPECT_EQ(s.post("/runs/" + id + "/cancel", json::object())["stage"], "cancelled");
}

TEST(Http, ErrorsAreStructured) {
    Server s;
    auto j = s.get("/runs/run-nope", 404);
    EXPECT_EQ(j["error"], "UnknownRun");
    EXPECT_TRUE(j["message"].is_string());
    s.get("/runs/run-nope/events", 404);
    s.get("/runs/run-nope/report", 404);
    auto r = s.client.Post("/runs", "{broken", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(json::parse(r->body)["error"], "ParseError");
    EXPECT_EQ(s.post("/runs", {{"text", "   "}}, 400)["error"], "InvalidArgument");
    EXPECT_EQ(s.post("/runs", {{"text", "q"}, {"options", {{"worker_count", 0}}}}, 400)["error"], "InvalidArgument");
    EXPECT_EQ(s.get("/catalog/query?limit=abc", 400)["error"], "ParseError");
}

TEST(Http, CatalogAndLibrary) {
    Server s;
    auto hits = s.get("/catalog/query?variable=tas&experiment=historical");
    ASSERT_FALSE(hits.empty());
    for (const auto& d : hits) EXPECT_EQ(d["experiment"], "historical");
    EXPECT_EQ(s.get("/catalog/query?variable=tas&limit=2").size(), 2u);
    EXPECT_FALSE(s.get("/catalog/query?variable=tas&covers=1985-2014").empty());
    s.get("/catalog/query", 400);

    auto tools = s.get("/library/records?kind=tool_doc");
    EXPECT_EQ(tools.size(), 12u);
    for (const auto& r : tools) EXPECT_FALSE(r.contains("embedding"));
    auto created = s.post("/library/records",
                          {{"id", "note-1"}, {"kind", "plan"}, {"summary", "a hand written plan"}, {"payload", json::object()}},
                          201);
    EXPECT_EQ(created["id"], "note-1");
    EXPECT_EQ(s.get("/library/records?kind=plan").size(), 5u);
    EXPECT_EQ(s.get("/library/records?kind=bogus", 400)["error"].get<std::string>().empty(), false);
}

TEST(Http, EvalEndpoints) {
    Server s;
    auto rep = s.get("/eval/report");
    EXPECT_EQ(rep["summary"], "16 of 36 at >= 4");
    EXPECT_EQ(rep["level_counts"]["L1"], 23);
    EXPECT_EQ(rep["dimension_ranking"][0]["dimension"], "planning");
    EXPECT_EQ(rep["scorecards"].size(), 36u);
    auto ok = s.post("/eval/scores", {{"task_id", "task-01"}, {"reviewer", "extra"}, {"dimension", "planning"}, {"value", 5}});
    EXPECT_EQ(ok["recorded"], 1);
    EXPECT_EQ(s.post("/eval/scores", {{"task_id", "task-01"}, {"reviewer", "x"}, {"dimension", "planning"}, {"value", 9}}, 400)["error"],
              "OutOfRange");
    EXPECT_EQ(s.post("/eval/scores", {{"task_id", "task-99"}, {"reviewer", "x"}, {"dimension", "planning"}, {"value", 3}}, 404)["error"],
              "UnknownTask");
}
