#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "climagent/agent.hpp"
#include "climagent/catalog.hpp"
#include "climagent/error.hpp"
#include "climagent/library.hpp"
#include "climagent/planner.hpp"
#include "climagent/review.hpp"

// The scientific lab: preprocessing, code generation, sandboxed execution,
// the repair loop, output validation and template promotion.
namespace climagent::lab {

struct PlausibilityRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct LabConfig {
    int debug_cap = 15;
    double template_threshold = 0.92;
    int retrieve_k = 3;
    std::chrono::milliseconds exec_timeout{120000};
    std::size_t output_cap = 1 << 20;
    std::uint64_t file_size_limit = 256ull << 20;
    bool confine = true;
    fs::path tools_binary;  // climate-tools; relative tool entrypoints resolve next to it
    std::map<std::string, fs::path> interpreters = {{"sh", "/bin/sh"}, {"python3", "/usr/bin/python3"}};
    // Keyed by "<variable>|<units>"; applies to statistics of kind "level".
    std::map<std::string, PlausibilityRange> plausibility = {
        {"tas|K", {170.0, 340.0}},
        {"tas|degC", {-103.15, 66.85}},
        {"pr|kg m-2 s-1", {0.0, 0.01}},
        {"pr|mm day-1", {0.0, 864.0}},
    };
};

// One bound tool call produced from a preprocessing step.
struct ToolInvocation {
    std::string op;
    std::string dataset;  // selector label or "*"
    std::string tool;     // manifest name
    fs::path entrypoint;
    std::vector<std::string> args;  // subcommand and bound parameters

    json to_json() const;
};

struct PreparedData {
    std::map<std::string, std::vector<fs::path>> files;  // by selector label
    json log = json::array();
};

struct TaskGraph {
    std::vector<planner::DiagnosticTask> nodes;                 // plan order
    std::vector<std::pair<std::string, std::string>> edges;     // (dependency, dependent)
    std::vector<std::string> topo_order;

    const planner::DiagnosticTask& node(const std::string& id) const;
    std::vector<std::string> dependencies(const std::string& id) const;
};

// Mirrors depends_on; cycle_detected on any cycle, including self-edges.
TaskGraph build_task_graph(const planner::Plan& plan);

enum class ArtifactSource { template_adapted, generated };
std::string_view to_string(ArtifactSource s);

struct CodeArtifact {
    std::string task_id;
    std::string script_text;
    std::string runtime_tag;
    ArtifactSource source = ArtifactSource::generated;
    int revision = 0;
    std::string template_id;  // set when adapted
    double template_score = 0.0;

    json to_json() const;
};

enum class ExecStatus { ok, error, timeout };
std::string_view to_string(ExecStatus s);

struct ExecutionResult {
    ExecStatus status = ExecStatus::error;
    int exit_code = -1;
    std::string out;
    std::string err;
    std::vector<std::string> produced_files;  // relative to the workspace, sorted
    std::optional<json> manifest;
    std::string digest;  // over outputs/ and result.json
    double wall_seconds = 0.0;
    bool confined = false;

    json to_json() const;
};

struct Finding {
    std::string check;
    std::string message;
    bool failure = true;
};

struct ValidationVerdict {
    std::string validator;  // "data" | "figure"
    bool passed = true;
    std::vector<Finding> findings;

    json to_json() const;
};

struct DebugRound {
    std::string error_excerpt;
    int revision = 0;
    std::string status;  // outcome of re-executing the revision
};

struct DebugTranscript {
    std::string task_id;
    std::vector<DebugRound> rounds;
    int cap = 15;

    json to_json() const;
};

// Raised when the repair loop spends its whole budget.
class DebugExhaustedError : public Error {
public:
    DebugExhaustedError(const std::string& msg, DebugTranscript transcript, std::vector<CodeArtifact> artifacts)
        : Error(Errc::debug_exhausted, msg), transcript_(std::move(transcript)), artifacts_(std::move(artifacts)) {}
    const DebugTranscript& transcript() const { return transcript_; }
    const std::vector<CodeArtifact>& artifacts() const { return artifacts_; }

private:
    DebugTranscript transcript_;
    std::vector<CodeArtifact> artifacts_;
};

// Per-task directories: <base>/ws is the writable workspace, <base>/inputs is
// the staged read-only input tree (ws/inputs links to it), <base>/scripts
// keeps every revision.
struct Workspace {
    fs::path base;
    fs::path root() const { return base / "ws"; }
    fs::path inputs() const { return base / "inputs"; }
    fs::path scripts() const { return base / "scripts"; }
};

struct TaskOutcome {
    std::string task_id;
    std::vector<CodeArtifact> artifacts;  // every revision in order
    ExecutionResult result;
    ValidationVerdict data;
    ValidationVerdict figure;
    DebugTranscript transcript;

    const CodeArtifact& final_artifact() const { return artifacts.back(); }
    bool validated() const { return result.status == ExecStatus::ok && data.passed && figure.passed; }
};

// Sorted relative paths with their contents hashed; missing dirs hash as empty.
std::string output_digest(const fs::path& workspace);

// Rewrites bare NaN/Infinity tokens (outside strings) to null.
std::string sanitize_json_numbers(const std::string& text);

class Lab {
public:
    Lab(const AgentClient& agent, library::Library& library, const catalog::Catalog& catalog, LabConfig config);

    const LabConfig& config() const { return config_; }

    // Errors: unknown_unit_conversion, no_tool_for_step.
    std::vector<ToolInvocation> compile_preprocess(const planner::Plan& plan) const;
    // Copies every selected dataset under <dir>/<label>/ and applies the
    // invocations in order.
    PreparedData run_preprocess(const planner::Plan& plan, const std::vector<ToolInvocation>& invocations,
                                const fs::path& dir) const;

    // Creates the task directories and stages inputs: dataset labels from
    // `prepared`, upstream task ids from their workspaces' outputs/.
    Workspace prepare_workspace(const fs::path& base, const planner::DiagnosticTask& task,
                                const PreparedData& prepared,
                                const std::map<std::string, fs::path>& upstream_workspaces) const;

    std::vector<library::ScoredRecord> retrieve_templates(const planner::DiagnosticTask& task) const;
    std::string doc_context(const planner::DiagnosticTask& task) const;

    // One re-prompt on non-script output, then code_parse_failure.
    CodeArtifact generate_code(const planner::DiagnosticTask& task, const std::vector<library::ScoredRecord>& templates,
                               const std::string& doc_context, bool figure_required = false) const;

    // Errors: sandbox_setup_failure. Timeouts are reported as status=timeout.
    ExecutionResult execute_artifact(const CodeArtifact& artifact, const Workspace& ws) const;

    std::pair<ValidationVerdict, ValidationVerdict> validate_outputs(const ExecutionResult& result,
                                                                     const planner::DiagnosticTask& task,
                                                                     const Workspace& ws, bool figure_required) const;

    // Revise and re-execute until the outputs validate or `cap` rounds are
    // spent; validator rejections count against the same cap. Throws
    // DebugExhaustedError.
    TaskOutcome run_debug_loop(const planner::DiagnosticTask& task, CodeArtifact artifact, ExecutionResult first,
                               const Workspace& ws, bool figure_required, int cap) const;

    // generate -> execute -> validate -> repair.
    TaskOutcome run_task(const planner::DiagnosticTask& task, const Workspace& ws, bool figure_required) const;

    // No record unless both verdicts passed. An approval promotes; no
    // decision queues a draft; a rejection changes nothing.
    std::optional<std::string> promote_on_success(const planner::DiagnosticTask& task, const TaskOutcome& outcome,
                                                  const std::optional<ReviewDecision>& approval,
                                                  const std::string& run_ref) const;

    CodeArtifact revise(const planner::DiagnosticTask& task, const CodeArtifact& previous,
                        const std::string& error_context) const;

private:
    fs::path resolve_entrypoint(const std::string& entrypoint) const;
    std::optional<library::ToolManifest> find_tool(const std::string& name) const;

    const AgentClient& agent_;
    library::Library& library_;
    const catalog::Catalog& catalog_;
    LabConfig config_;
};

}  // namespace climagent::lab
