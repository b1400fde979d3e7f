#include "climagent/agent.hpp"

#include "climagent/error.hpp"

namespace climagent {

gateway::ModelResponse AgentClient::call(const std::vector<gateway::Message>& messages, double temperature,
                                         std::int64_t seed, int max_tokens) const {
    gateway::ModelRequest req;
    req.messages = messages;
    req.temperature = temperature;
    req.seed = seed;
    req.max_tokens = max_tokens;
    req.backend_id = backend_id_;
    const auto agent = gateway::agent_of(messages);
    json base = {{"agent", agent},
                 {"key", gateway::fixture_key(messages)},
                 {"temperature", temperature},
                 {"seed", seed}};
    try {
        auto resp = gateway_->complete(req);
        json payload = base;
        payload["backend"] = resp.backend_id;
        payload["prompt_tokens"] = resp.usage.prompt_tokens;
        payload["completion_tokens"] = resp.usage.completion_tokens;
        payload["truncated"] = resp.truncated;
        emit("model_call", payload);
        return resp;
    } catch (const Error& e) {
        json payload = base;
        payload["error"] = e.what();
        emit("model_call_failed", payload);
        if (e.code() == Errc::invalid_argument) throw;
        fail(Errc::backend_failure, std::string("agent ") + agent + ": " + e.what());
    }
}

std::vector<gateway::Message> agent_messages(const std::string& agent, const std::string& role_text,
                                             const std::string& user_text) {
    return {{gateway::Role::system, "agent: " + agent + "\n" + role_text},
            {gateway::Role::user, user_text}};
}

}  // namespace climagent
