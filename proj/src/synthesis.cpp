#include "climagent/synthesis.hpp"

#include <algorithm>
#include <future>
#include <sstream>

#include "climagent/error.hpp"

namespace climagent::synthesis {

namespace {

constexpr const char* kFigureRole =
    "You interpret one scientific figure from its metadata. Reply with a ```json block "
    "{\"narrative\": str, \"highlights\": [str]} describing key patterns, anomalies and trends.";
constexpr const char* kReportRole =
    "You integrate partial figure reports into one coherent overall interpretation. Reply with plain text.";
constexpr const char* kChairRole =
    "You chair an impact-assessment committee. Choose the domain experts the topic needs and write one prompt "
    "for each. Reply with a ```json block {\"experts\": [{\"domain\": str, \"prompt\": str}]}.";
constexpr const char* kExpertRole =
    "You are a domain expert on an impact-assessment committee. Reply with a ```json block "
    "{\"orientation\": \"positive\"|\"negative\", \"confidence\": number in [0,1], \"narrative\": str}.";
constexpr const char* kCommitteeRole =
    "You synthesize expert assessments into a structured final assessment. Reply with a ```json block "
    "{\"consensus\": [str], \"disagreements\": [str], \"uncertainties\": [str]}.";

json parse_reply(const std::string& text) {
    auto body = extract_fenced(text, {"json"}).value_or(text);
    try {
        return json::parse(body);
    } catch (const json::parse_error& e) {
        fail(Errc::parse_error, std::string("reply is not JSON: ") + e.what());
    }
}

std::vector<std::string> string_list(const json& j, const char* key) {
    std::vector<std::string> out;
    if (!j.contains(key)) return out;
    if (!j[key].is_array()) fail(Errc::parse_error, std::string(key) + " must be a list");
    for (const auto& x : j[key]) out.push_back(x.is_string() ? x.get<std::string>() : x.dump());
    return out;
}

std::string report_digest(const UnifiedReport& report) {
    std::ostringstream os;
    os << "objective: " << report.objective << "\n";
    os << "overall: " << report.overall << "\n";
    for (const auto& s : report.sections) os << "- " << s.task_id << ": " << s.narrative << "\n";
    return os.str();
}

}  // namespace

json FigureInterpretation::to_json() const {
    return {{"task_id", task_id}, {"figure", figure}, {"narrative", narrative},
            {"highlighted_features", highlighted_features}};
}

FigureInterpretation FigureInterpretation::from_json(const json& j) {
    return {j.value("task_id", ""), j.value("figure", ""), j.value("narrative", ""),
            j.value("highlighted_features", std::vector<std::string>{})};
}

json UnifiedReport::to_json() const {
    json s = json::array();
    for (const auto& x : sections) s.push_back(x.to_json());
    return {{"objective", objective}, {"sections", s}, {"overall", overall}, {"figures", figures}};
}

UnifiedReport UnifiedReport::from_json(const json& j) {
    UnifiedReport r;
    r.objective = j.value("objective", "");
    for (const auto& s : j.value("sections", json::array())) r.sections.push_back(FigureInterpretation::from_json(s));
    r.overall = j.value("overall", "");
    r.figures = j.value("figures", std::vector<std::string>{});
    return r;
}

std::string UnifiedReport::markdown() const {
    std::ostringstream os;
    os << "# Report\n\n**Objective:** " << objective << "\n\n";
    for (const auto& s : sections) {
        os << "## " << s.task_id << "\n\n![" << s.task_id << "](" << s.figure << ")\n\n" << s.narrative << "\n\n";
        for (const auto& h : s.highlighted_features) os << "- " << h << "\n";
        if (!s.highlighted_features.empty()) os << "\n";
    }
    os << "## Overall interpretation\n\n" << overall << "\n";
    return os.str();
}

json CommitteeConfig::to_json() const {
    json e = json::array();
    for (const auto& x : experts) e.push_back({{"domain", x.domain}, {"prompt", x.prompt}});
    return {{"topic", topic}, {"experts", e}};
}

std::string_view to_string(Orientation o) { return o == Orientation::positive ? "positive" : "negative"; }

json ExpertAssessment::to_json() const {
    return {{"domain", domain}, {"narrative", narrative}, {"orientation", std::string(to_string(orientation))},
            {"confidence", confidence}};
}

ExpertAssessment ExpertAssessment::from_json(const json& j) {
    ExpertAssessment a;
    a.domain = j.value("domain", "");
    a.narrative = j.value("narrative", "");
    auto o = to_lower(j.value("orientation", ""));
    if (o == "positive") {
        a.orientation = Orientation::positive;
    } else if (o == "negative") {
        a.orientation = Orientation::negative;
    } else {
        fail(Errc::parse_error, "orientation must be positive or negative, got '" + o + "'");
    }
    if (j.contains("confidence")) {
        if (!j["confidence"].is_number()) fail(Errc::parse_error, "confidence must be a number");
        a.confidence = j["confidence"].get<double>();
    }
    if (!(a.confidence >= 0.0 && a.confidence <= 1.0)) fail(Errc::parse_error, "confidence outside [0,1]");
    return a;
}

json CommitteeReport::to_json() const {
    json a = json::array();
    for (const auto& x : assessments) a.push_back(x.to_json());
    return {{"topic", topic},           {"assessments", a},           {"consensus", consensus},
            {"disagreements", disagreements}, {"uncertainties", uncertainties}, {"sentiment", sentiment}};
}

CommitteeReport CommitteeReport::from_json(const json& j) {
    CommitteeReport r;
    r.topic = j.value("topic", "");
    for (const auto& a : j.value("assessments", json::array())) r.assessments.push_back(ExpertAssessment::from_json(a));
    r.consensus = j.value("consensus", std::vector<std::string>{});
    r.disagreements = j.value("disagreements", std::vector<std::string>{});
    r.uncertainties = j.value("uncertainties", std::vector<std::string>{});
    r.sentiment = j.value("sentiment", 0.0);
    return r;
}

std::string CommitteeReport::markdown() const {
    std::ostringstream os;
    os << "# Committee assessment: " << topic << "\n\n";
    char s[32];
    std::snprintf(s, sizeof s, "%+.2f", sentiment);
    os << "**Sentiment:** " << s << " over " << assessments.size() << " experts\n\n## Experts\n\n";
    for (const auto& a : assessments)
        os << "- **" << a.domain << "** (" << to_string(a.orientation) << ", confidence " << a.confidence
           << "): " << a.narrative << "\n";
    auto list = [&](const char* title, const std::vector<std::string>& items) {
        os << "\n## " << title << "\n\n";
        if (items.empty()) os << "(none)\n";
        for (const auto& x : items) os << "- " << x << "\n";
    };
    list("Consensus", consensus);
    list("Disagreements", disagreements);
    list("Uncertainties", uncertainties);
    return os.str();
}

double sentiment_score(const std::vector<ExpertAssessment>& assessments, bool confidence_weighted) {
    if (assessments.empty()) fail(Errc::empty_panel, "no assessments to score");
    if (!confidence_weighted) {
        long pos = 0, neg = 0;
        for (const auto& a : assessments) (a.orientation == Orientation::positive ? pos : neg)++;
        return double(pos - neg) / double(pos + neg);
    }
    double pos = 0.0, neg = 0.0;
    for (const auto& a : assessments) (a.orientation == Orientation::positive ? pos : neg) += a.confidence;
    if (pos + neg == 0.0) return 0.0;
    return (pos - neg) / (pos + neg);
}

Synthesizer::Synthesizer(const AgentClient& agent, const library::Library* library, SynthesisConfig config)
    : agent_(agent), library_(library), config_(config) {}

FigureInterpretation Synthesizer::interpret_figure(const fs::path& figure, const fs::path& sidecar,
                                                   const TaskContext& context) const {
    if (!fs::is_regular_file(sidecar)) fail(Errc::missing_sidecar, "no sidecar metadata for " + figure.string());
    if (!fs::is_regular_file(figure)) fail(Errc::structural_validation, "figure missing: " + figure.string());
    json meta;
    try {
        meta = json::parse(read_file(sidecar));
    } catch (const json::parse_error&) {
        fail(Errc::missing_sidecar, "sidecar is not valid JSON: " + sidecar.string());
    }
    std::ostringstream user;
    user << "task: " << context.task_id << "\n";
    user << "objective: " << context.objective << "\n";
    user << "description: " << context.description << "\n";
    user << "figure: " << figure.filename().string() << "\n";
    user << "sidecar:\n" << meta.dump(2) << "\n";
    auto messages = agent_messages("synthesis.figure", kFigureRole, user.str());
    auto resp = agent_.call(messages);
    FigureInterpretation fi;
    fi.task_id = context.task_id;
    fi.figure = figure.string();
    try {
        auto j = parse_reply(resp.text);
        fi.narrative = j.value("narrative", "");
        fi.highlighted_features = string_list(j, "highlights");
    } catch (const std::exception& e) {
        fail(Errc::backend_failure, "figure interpretation for " + context.task_id + ": " + e.what());
    }
    if (trim(fi.narrative).empty()) fail(Errc::backend_failure, "empty figure narrative for " + context.task_id);
    return fi;
}

UnifiedReport Synthesizer::summarize_reports(std::vector<FigureInterpretation> interpretations,
                                             const std::string& objective) const {
    if (interpretations.empty()) fail(Errc::structural_validation, "no interpretations to integrate");
    for (const auto& i : interpretations)
        if (!fs::is_regular_file(i.figure))
            fail(Errc::structural_validation, "section " + i.task_id + " references missing figure " + i.figure);
    std::stable_sort(interpretations.begin(), interpretations.end(),
                     [](const auto& a, const auto& b) { return std::tie(a.task_id, a.figure) < std::tie(b.task_id, b.figure); });

    UnifiedReport r;
    r.objective = objective;
    for (const auto& i : interpretations) r.figures.push_back(i.figure);
    std::ostringstream user;
    user << "objective: " << objective << "\n\nPartial reports:\n";
    for (const auto& i : interpretations) {
        user << "## " << i.task_id << "\n" << i.narrative << "\n";
        for (const auto& h : i.highlighted_features) user << "- " << h << "\n";
    }
    auto resp = agent_.call(agent_messages("synthesis.report", kReportRole, user.str()));
    r.overall = trim(resp.text);
    if (r.overall.empty()) fail(Errc::backend_failure, "empty overall interpretation");
    r.sections = std::move(interpretations);
    return r;
}

CommitteeConfig Synthesizer::convene_committee(const std::string& topic, const UnifiedReport& report) const {
    if (config_.expert_count < 1) fail(Errc::invalid_argument, "expert_count must be >= 1");
    std::ostringstream user;
    user << "topic: " << topic << "\n";
    user << "expert_count: " << config_.expert_count << "\n\n";
    user << "Report summary:\n" << report_digest(report) << "\n";
    user << "Library context:\n";
    if (library_ && library_->size() > 0) {
        for (const auto& r : library_->retrieve_text(topic, config_.retrieve_k)) user << "- " << r.record.summary << "\n";
    } else {
        user << "(none)\n";
    }
    auto messages = agent_messages("committee.chair", kChairRole, user.str());
    std::string problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto resp = agent_.call(messages);
        try {
            auto j = parse_reply(resp.text);
            if (!j.is_object() || !j.contains("experts") || !j["experts"].is_array())
                fail(Errc::parse_error, "reply lacks an experts list");
            CommitteeConfig cfg;
            cfg.topic = topic;
            for (const auto& e : j["experts"]) {
                ExpertSpec s{e.value("domain", ""), e.value("prompt", "")};
                if (trim(s.domain).empty() || trim(s.prompt).empty()) fail(Errc::parse_error, "expert without domain or prompt");
                cfg.experts.push_back(std::move(s));
                if (int(cfg.experts.size()) == config_.expert_count) break;
            }
            if (int(cfg.experts.size()) < config_.expert_count)
                fail(Errc::parse_error, "chair named " + std::to_string(cfg.experts.size()) + " experts, need " +
                                            std::to_string(config_.expert_count));
            agent_.emit("committee_convened", cfg.to_json());
            return cfg;
        } catch (const Error& e) {
            if (e.code() != Errc::parse_error) throw;
            problem = e.what();
        } catch (const json::exception& e) {
            problem = e.what();
        }
        messages.push_back({gateway::Role::assistant, resp.text});
        messages.push_back({gateway::Role::user, "Unusable reply: " + problem + "\nReply with the JSON block only."});
    }
    fail(Errc::domain_parse_failure, "chair output unusable: " + problem);
}

std::vector<ExpertAssessment> Synthesizer::collect_assessments(const CommitteeConfig& config,
                                                               const UnifiedReport& report) const {
    if (config.experts.empty()) fail(Errc::empty_panel, "committee has no experts");
    const auto digest = report_digest(report);
    auto ask = [&](const ExpertSpec& spec) {
        std::ostringstream user;
        user << "topic: " << config.topic << "\n";
        user << "domain: " << spec.domain << "\n\n" << spec.prompt << "\n\nReport:\n" << digest;
        auto resp = agent_.call(agent_messages("committee.expert", kExpertRole, user.str()));
        auto a = ExpertAssessment::from_json(parse_reply(resp.text));
        a.domain = spec.domain;
        return a;
    };

    const auto n = config.experts.size();
    std::vector<std::optional<ExpertAssessment>> slots(n);
    std::vector<std::string> errors(n);
    auto run_one = [&](std::size_t i) {
        try {
            slots[i] = ask(config.experts[i]);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };
    if (config_.parallel) {
        std::vector<std::future<void>> fs;
        for (std::size_t i = 0; i < n; ++i) fs.push_back(std::async(std::launch::async, run_one, i));
        for (auto& f : fs) f.get();
    } else {
        for (std::size_t i = 0; i < n; ++i) run_one(i);
    }

    std::vector<ExpertAssessment> out;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (slots[i]) {
            out.push_back(*slots[i]);
        } else {
            ++failed;
            agent_.emit("expert_failed", {{"domain", config.experts[i].domain}, {"error", errors[i]}});
        }
    }
    if (failed * 2 > n)
        fail(Errc::committee_failure, std::to_string(failed) + " of " + std::to_string(n) + " experts failed");
    return out;
}

CommitteeReport Synthesizer::synthesize_committee_report(const CommitteeConfig& config,
                                                         const std::vector<ExpertAssessment>& assessments) const {
    CommitteeReport r;
    r.topic = config.topic;
    r.assessments = assessments;
    r.sentiment = sentiment_score(assessments, config_.confidence_weighted);
    std::ostringstream user;
    user << "topic: " << config.topic << "\n\nAssessments:\n";
    for (const auto& a : assessments)
        user << "- [" << a.domain << "] " << to_string(a.orientation) << " (" << a.confidence << "): " << a.narrative
             << "\n";
    auto resp = agent_.call(agent_messages("committee.synthesis", kCommitteeRole, user.str()));
    try {
        auto j = parse_reply(resp.text);
        r.consensus = string_list(j, "consensus");
        r.disagreements = string_list(j, "disagreements");
        r.uncertainties = string_list(j, "uncertainties");
    } catch (const std::exception& e) {
        fail(Errc::backend_failure, std::string("committee synthesis: ") + e.what());
    }
    return r;
}

}  // namespace climagent::synthesis
