#include "climagent/config.hpp"

#include <cstdlib>

#include "climagent/error.hpp"

namespace climagent::service {

namespace {

json scalar_view(const ServiceConfig& c) {
    return {{"data_dir", c.data_dir},
            {"catalog_index", c.catalog_index},
            {"data_root", c.data_root},
            {"library_dir", c.library_dir},
            {"library_seed", c.library_seed},
            {"web_dir", c.web_dir},
            {"mock_dir", c.mock_dir},
            {"tools_binary", c.tools_binary},
            {"suite", c.suite},
            {"scores", c.scores},
            {"host", c.host},
            {"port", c.port},
            {"worker_count", c.worker_count},
            {"expert_count", c.expert_count},
            {"candidate_count", c.candidate_count},
            {"debug_cap", c.debug_cap},
            {"exec_timeout_s", c.exec_timeout_s},
            {"template_threshold", c.template_threshold},
            {"confine", c.confine},
            {"confidence_weighted", c.confidence_weighted}};
}

// Parses `text` into the JSON type of `like`.
json coerce(const std::string& key, const std::string& text, const json& like) {
    try {
        if (like.is_boolean()) {
            auto t = to_lower(trim(text));
            if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
            if (t == "0" || t == "false" || t == "no" || t == "off") return false;
            throw std::invalid_argument(text);
        }
        std::size_t used = 0;
        if (like.is_number_integer()) {
            auto v = std::stoll(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
            return v;
        }
        if (like.is_number_float()) {
            auto v = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
            return v;
        }
    } catch (const std::exception&) {
        fail(Errc::invalid_argument, "config key " + key + ": cannot parse '" + text + "'");
    }
    return text;
}

}  // namespace

json ServiceConfig::to_json() const {
    auto j = scalar_view(*this);
    json b = json::array();
    for (const auto& d : backends)
        b.push_back({{"id", d.id},
                     {"transport", d.transport},
                     {"fixture_dir", d.fixture_dir},
                     {"endpoint", d.endpoint},
                     {"timeout_ms", d.timeout.count()},
                     {"embed", d.remote_embed}});
    j["backends"] = b;
    return j;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    const json view = scalar_view(ServiceConfig{});
    for (const auto& [k, v] : view.items()) keys.push_back(k);
    return keys;
}

std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
}

ServiceConfig load_config(const std::optional<fs::path>& file, const EnvLookup& env,
                          const std::map<std::string, std::string>& cli) {
    json merged = scalar_view(ServiceConfig{});
    json backends = json::array();
    if (file) {
        auto doc = read_json_file(*file);
        if (!doc.is_object()) fail(Errc::invalid_argument, "config file must hold a JSON object");
        for (const auto& [k, v] : doc.items()) {
            if (k == "backends") {
                backends = v;
                continue;
            }
            if (!merged.contains(k)) fail(Errc::invalid_argument, "unknown config key '" + k + "'");
            if (merged[k].is_number() && v.is_number()) {
                merged[k] = merged[k].is_number_integer() ? json(v.get<long long>()) : json(v.get<double>());
            } else if (merged[k].type() != v.type()) {
                fail(Errc::invalid_argument, "config key '" + k + "' has the wrong type");
            } else {
                merged[k] = v;
            }
        }
    }
    for (const auto& key : config_keys()) {
        if (!env) break;
        auto upper = key;
        for (auto& c : upper) c = char(std::toupper(static_cast<unsigned char>(c)));
        if (auto v = env("CLIMAGENT_" + upper)) merged[key] = coerce(key, *v, merged[key]);
    }
    for (const auto& [k, v] : cli) {
        if (!merged.contains(k)) fail(Errc::invalid_argument, "unknown config key '" + k + "'");
        merged[k] = coerce(k, v, merged[k]);
    }

    ServiceConfig c;
    c.data_dir = merged["data_dir"];
    c.catalog_index = merged["catalog_index"];
    c.data_root = merged["data_root"];
    c.library_dir = merged["library_dir"];
    c.library_seed = merged["library_seed"];
    c.web_dir = merged["web_dir"];
    c.mock_dir = merged["mock_dir"];
    c.tools_binary = merged["tools_binary"];
    c.suite = merged["suite"];
    c.scores = merged["scores"];
    c.host = merged["host"];
    c.port = merged["port"];
    c.worker_count = merged["worker_count"];
    c.expert_count = merged["expert_count"];
    c.candidate_count = merged["candidate_count"];
    c.debug_cap = merged["debug_cap"];
    c.exec_timeout_s = merged["exec_timeout_s"];
    c.template_threshold = merged["template_threshold"];
    c.confine = merged["confine"];
    c.confidence_weighted = merged["confidence_weighted"];
    for (const auto& b : backends) c.backends.push_back(gateway::BackendDescriptor::from_json(b));
    if (c.worker_count < 1 || c.expert_count < 1 || c.candidate_count < 1 || c.debug_cap < 1 || c.exec_timeout_s < 1)
        fail(Errc::invalid_argument, "counts, caps and timeouts must be positive");
    return c;
}

}  // namespace climagent::service
