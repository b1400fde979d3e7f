#pragma once

#include <functional>
#include <string>
#include <vector>

#include "climagent/gateway.hpp"

namespace climagent {

// Receives structured events (model calls, executions, verdicts, ...).
// Implementations must be thread-safe.
using EventSink = std::function<void(const std::string& type, const json& payload)>;

// Thin wrapper that every agent uses to reach the gateway: it reports each
// call to the event sink and converts gateway failures into backend_failure.
class AgentClient {
public:
    explicit AgentClient(const gateway::Gateway& gateway, std::string backend_id = {}, EventSink sink = {})
        : gateway_(&gateway), backend_id_(std::move(backend_id)), sink_(std::move(sink)) {}

    gateway::ModelResponse call(const std::vector<gateway::Message>& messages, double temperature = 0.0,
                                std::int64_t seed = 0, int max_tokens = 4096) const;

    gateway::Embedding embed(std::string_view text) const { return gateway_->embed(text, backend_id_); }

    void emit(const std::string& type, const json& payload) const {
        if (sink_) sink_(type, payload);
    }

    const gateway::Gateway& gateway() const { return *gateway_; }
    const std::string& backend_id() const { return backend_id_; }

private:
    const gateway::Gateway* gateway_;
    std::string backend_id_;
    EventSink sink_;
};

// Builds a [system, user] message pair; the system text starts with the
// "agent: <name>" tag the mock backend routes on.
std::vector<gateway::Message> agent_messages(const std::string& agent, const std::string& role_text,
                                             const std::string& user_text);

}  // namespace climagent
