#pragma once

#include <string>
#include <vector>

#include "climagent/agent.hpp"
#include "climagent/library.hpp"

// Multi-scenario analysis: figure interpretation, the unified report and the
// chair/sub-expert committee.
namespace climagent::synthesis {

struct TaskContext {
    std::string task_id;
    std::string description;
    std::string objective;
};

struct FigureInterpretation {
    std::string task_id;
    std::string figure;
    std::string narrative;
    std::vector<std::string> highlighted_features;

    json to_json() const;
    static FigureInterpretation from_json(const json& j);
};

struct UnifiedReport {
    std::string objective;
    std::vector<FigureInterpretation> sections;  // sorted by task id
    std::string overall;
    std::vector<std::string> figures;

    json to_json() const;
    static UnifiedReport from_json(const json& j);
    std::string markdown() const;
};

struct ExpertSpec {
    std::string domain;
    std::string prompt;
};

struct CommitteeConfig {
    std::string topic;
    std::vector<ExpertSpec> experts;

    json to_json() const;
};

enum class Orientation { positive, negative };
std::string_view to_string(Orientation o);

struct ExpertAssessment {
    std::string domain;
    std::string narrative;
    Orientation orientation = Orientation::positive;
    double confidence = 1.0;

    json to_json() const;
    static ExpertAssessment from_json(const json& j);
};

struct CommitteeReport {
    std::string topic;
    std::vector<ExpertAssessment> assessments;
    std::vector<std::string> consensus;
    std::vector<std::string> disagreements;
    std::vector<std::string> uncertainties;
    double sentiment = 0.0;

    json to_json() const;
    static CommitteeReport from_json(const json& j);
    std::string markdown() const;
};

// (n_pos - n_neg) / (n_pos + n_neg); the weighted variant sums confidences
// instead of counts. Errors: empty_panel.
double sentiment_score(const std::vector<ExpertAssessment>& assessments, bool confidence_weighted = false);

struct SynthesisConfig {
    int expert_count = 10;
    bool confidence_weighted = false;
    int retrieve_k = 3;
    bool parallel = true;
};

class Synthesizer {
public:
    Synthesizer(const AgentClient& agent, const library::Library* library, SynthesisConfig config = {});

    const SynthesisConfig& config() const { return config_; }

    // Errors: missing_sidecar, backend_failure.
    FigureInterpretation interpret_figure(const fs::path& figure, const fs::path& sidecar,
                                          const TaskContext& context) const;
    // Errors: structural_validation (before any model call), backend_failure.
    UnifiedReport summarize_reports(std::vector<FigureInterpretation> interpretations,
                                    const std::string& objective) const;
    // Errors: domain_parse_failure after one re-prompt, backend_failure.
    CommitteeConfig convene_committee(const std::string& topic, const UnifiedReport& report) const;
    // One call per expert, concurrently. Failed experts are reported as
    // events; committee_failure when more than half the panel fails.
    std::vector<ExpertAssessment> collect_assessments(const CommitteeConfig& config, const UnifiedReport& report) const;
    CommitteeReport synthesize_committee_report(const CommitteeConfig& config,
                                                const std::vector<ExpertAssessment>& assessments) const;

private:
    const AgentClient& agent_;
    const library::Library* library_;
    SynthesisConfig config_;
};

}  // namespace climagent::synthesis
