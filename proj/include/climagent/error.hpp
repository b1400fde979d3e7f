#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace climagent {

// Every failure surfaced by the library carries one of these codes so callers
// (CLI, HTTP layer, tests) can branch without parsing messages.
enum class Errc {
    invalid_argument,
    // gateway
    unknown_backend,
    backend_timeout,
    fixture_miss,
    duplicate_id,
    invalid_descriptor,
    backend_failure,
    // catalog
    parse_error,
    invariant_violation,
    empty_query,
    missing_file,
    // library
    embedding_mismatch,
    duplicate_id_conflict,
    invalid_k,
    not_approved,
    missing_run_reference,
    // planner
    plan_parse_failure,
    merge_parse_failure,
    patch_invariant_violation,
    // lab
    unknown_unit_conversion,
    no_tool_for_step,
    cycle_detected,
    code_parse_failure,
    sandbox_setup_failure,
    debug_exhausted,
    preprocess_failure,
    // numerics / grids
    period_out_of_range,
    degenerate_input,
    invalid_spec,
    // synthesis
    missing_sidecar,
    structural_validation,
    domain_parse_failure,
    committee_failure,
    empty_panel,
    // evalharness
    unknown_level,
    out_of_range,
    unknown_task,
    incomplete_scores,
    missing_scorecards,
    // service
    persistence_failure,
    wrong_stage,
    unknown_run,
    run_active,
    illegal_transition,
};

std::string_view to_string(Errc code);
// Inverse of to_string; invalid_argument for unknown names.
Errc errc_from_string(std::string_view name);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace climagent
