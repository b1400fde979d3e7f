#include "climagent/error.hpp"

namespace climagent {

std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::invalid_argument: return "InvalidArgument";
        case Errc::unknown_backend: return "UnknownBackend";
        case Errc::backend_timeout: return "BackendTimeout";
        case Errc::fixture_miss: return "FixtureMiss";
        case Errc::duplicate_id: return "DuplicateId";
        case Errc::invalid_descriptor: return "InvalidDescriptor";
        case Errc::backend_failure: return "BackendFailure";
        case Errc::parse_error: return "ParseError";
        case Errc::invariant_violation: return "InvariantViolation";
        case Errc::empty_query: return "EmptyQuery";
        case Errc::missing_file: return "MissingFile";
        case Errc::embedding_mismatch: return "EmbeddingMismatch";
        case Errc::duplicate_id_conflict: return "DuplicateIdConflict";
        case Errc::invalid_k: return "InvalidK";
        case Errc::not_approved: return "NotApproved";
        case Errc::missing_run_reference: return "MissingRunReference";
        case Errc::plan_parse_failure: return "PlanParseFailure";
        case Errc::merge_parse_failure: return "MergeParseFailure";
        case Errc::patch_invariant_violation: return "PatchInvariantViolation";
        case Errc::unknown_unit_conversion: return "UnknownUnitConversion";
        case Errc::no_tool_for_step: return "NoToolForStep";
        case Errc::cycle_detected: return "CycleDetected";
        case Errc::code_parse_failure: return "CodeParseFailure";
        case Errc::sandbox_setup_failure: return "SandboxSetupFailure";
        case Errc::debug_exhausted: return "DebugExhausted";
        case Errc::preprocess_failure: return "PreprocessFailure";
        case Errc::period_out_of_range: return "PeriodOutOfRange";
        case Errc::degenerate_input: return "DegenerateInput";
        case Errc::invalid_spec: return "InvalidSpec";
        case Errc::missing_sidecar: return "MissingSidecar";
        case Errc::structural_validation: return "StructuralValidation";
        case Errc::domain_parse_failure: return "DomainParseFailure";
        case Errc::committee_failure: return "CommitteeFailure";
        case Errc::empty_panel: return "EmptyPanel";
        case Errc::unknown_level: return "UnknownLevel";
        case Errc::out_of_range: return "OutOfRange";
        case Errc::unknown_task: return "UnknownTask";
        case Errc::incomplete_scores: return "IncompleteScores";
        case Errc::missing_scorecards: return "MissingScorecards";
        case Errc::persistence_failure: return "PersistenceFailure";
        case Errc::wrong_stage: return "WrongStage";
        case Errc::unknown_run: return "UnknownRun";
        case Errc::run_active: return "RunActive";
        case Errc::illegal_transition: return "IllegalTransition";
    }
    return "Unknown";
}

Errc errc_from_string(std::string_view name) {
    for (int i = 0; i <= int(Errc::illegal_transition); ++i)
        if (to_string(Errc(i)) == name) return Errc(i);
    return Errc::invalid_argument;
}

}  // namespace climagent
