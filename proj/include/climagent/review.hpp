#pragma once

#include <optional>
#include <string>

#include "climagent/util.hpp"

namespace climagent {

// A human decision on a plan or on a task's outputs.
struct ReviewDecision {
    std::string reviewer;
    bool approved = false;
    std::optional<json> edits;  // RFC 6902 JSON Patch against the plan document
    std::string comment;
    std::string run_ref;

    json to_json() const {
        json j = {{"reviewer", reviewer}, {"approved", approved}, {"comment", comment}, {"run_ref", run_ref}};
        if (edits) j["edits"] = *edits;
        return j;
    }

    static ReviewDecision from_json(const json& j) {
        ReviewDecision d;
        d.reviewer = j.value("reviewer", "");
        d.approved = j.value("approved", false);
        d.comment = j.value("comment", "");
        d.run_ref = j.value("run_ref", "");
        if (j.contains("edits") && !j["edits"].is_null()) d.edits = j["edits"];
        return d;
    }
};

}  // namespace climagent
