#include "climagent/gateway.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "climagent/error.hpp"

namespace climagent::gateway {

std::string_view to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(std::string_view s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    fail(Errc::invalid_argument, "unknown role '" + std::string(s) + "'");
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

Embedding hash_embedding(std::string_view text, std::size_t dim) {
    Embedding v(dim, 0.0);
    for (const auto& token : tokenize(text)) v[fnv1a64(token) % dim] += 1.0;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) return v;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) fail(Errc::invalid_argument, "embedding dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string fixture_key(const std::vector<Message>& messages) {
    json canonical = json::array();
    for (const auto& m : messages) canonical.push_back({std::string(to_string(m.role)), m.text});
    return sha256_hex(canonical.dump());
}

std::string agent_of(const std::vector<Message>& messages) {
    for (const auto& m : messages) {
        if (m.role != Role::system) continue;
        auto first_line = m.text.substr(0, m.text.find('\n'));
        constexpr std::string_view prefix = "agent:";
        if (first_line.rfind(prefix, 0) == 0) return trim(first_line.substr(prefix.size()));
        return {};
    }
    return {};
}

namespace {

void validate_request(const ModelRequest& request) {
    if (request.messages.empty()) fail(Errc::invalid_argument, "request has no messages");
    if (request.temperature < 0.0) fail(Errc::invalid_argument, "negative temperature");
    if (request.max_tokens <= 0) fail(Errc::invalid_argument, "max_tokens must be positive");
}

int count_tokens(std::string_view s) {
    int n = 0;
    bool in_word = false;
    for (unsigned char c : s) {
        bool ws = std::isspace(c) != 0;
        if (!ws && !in_word) ++n;
        in_word = !ws;
    }
    return n;
}

int prompt_tokens(const ModelRequest& request) {
    int n = 0;
    for (const auto& m : request.messages) n += count_tokens(m.text);
    return n;
}

// Cuts `text` after its first `limit` whitespace-delimited tokens.
std::string truncate_tokens(const std::string& text, int limit) {
    int n = 0;
    bool in_word = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        bool ws = std::isspace(static_cast<unsigned char>(text[i])) != 0;
        if (!ws && !in_word) {
            if (n == limit) return text.substr(0, i);
            ++n;
        }
        in_word = !ws;
    }
    return text;
}

std::string memory_key(const std::vector<Message>& messages, std::optional<std::int64_t> seed) {
    auto key = fixture_key(messages);
    if (seed) key += ".s" + std::to_string(*seed);
    return key;
}

}  // namespace

MockBackend::MockBackend(std::string id, fs::path fixture_dir, std::size_t dim,
                         std::chrono::milliseconds timeout)
    : id_(std::move(id)), dir_(std::move(fixture_dir)), dim_(dim), timeout_(timeout) {}

void MockBackend::add_fixture(const std::vector<Message>& messages,
                              std::optional<std::int64_t> seed, std::string text) {
    std::lock_guard lock(mu_);
    memory_[memory_key(messages, seed)] = std::move(text);
}

void MockBackend::add_route(Route route) {
    std::lock_guard lock(mu_);
    load_routes();
    routes_.insert(routes_.begin(), std::move(route));
}

void MockBackend::load_routes() {
    if (routes_loaded_) return;
    routes_loaded_ = true;
    auto path = dir_ / "routes.json";
    if (dir_.empty() || !fs::exists(path)) return;
    auto doc = read_json_file(path);
    for (const auto& r : doc.at("routes")) {
        Route route;
        route.agent = r.value("agent", "");
        route.contains = r.value("contains", std::vector<std::string>{});
        route.excludes = r.value("excludes", std::vector<std::string>{});
        if (r.contains("seed")) route.seed = r.at("seed").get<std::int64_t>();
        route.delay_ms = r.value("delay_ms", 0);
        if (r.contains("text_file")) {
            route.text = read_file(dir_ / r.at("text_file").get<std::string>());
        } else {
            route.text = r.value("text", "");
        }
        if (r.contains("variants")) {
            for (const auto& [seed, v] : r.at("variants").items()) {
                std::string text = v.is_object() ? read_file(dir_ / v.at("text_file").get<std::string>())
                                                 : v.get<std::string>();
                route.variants[std::stoll(seed)] = std::move(text);
            }
        }
        routes_.push_back(std::move(route));
    }
}

std::optional<std::pair<std::string, int>> MockBackend::lookup(const ModelRequest& request) {
    const bool seeded = request.temperature > 0.0;
    const auto key = fixture_key(request.messages);
    auto read_fixture = [](const fs::path& p) {
        auto doc = read_json_file(p);
        return std::make_pair(doc.at("text").get<std::string>(), doc.value("delay_ms", 0));
    };
    if (!dir_.empty()) {
        if (seeded) {
            auto p = dir_ / (key + ".s" + std::to_string(request.seed) + ".json");
            if (fs::exists(p)) return read_fixture(p);
        }
        auto p = dir_ / (key + ".json");
        if (fs::exists(p)) return read_fixture(p);
    }

    std::lock_guard lock(mu_);
    if (seeded) {
        auto it = memory_.find(key + ".s" + std::to_string(request.seed));
        if (it != memory_.end()) return std::make_pair(it->second, 0);
    }
    if (auto it = memory_.find(key); it != memory_.end()) return std::make_pair(it->second, 0);

    load_routes();
    const auto agent = agent_of(request.messages);
    std::string haystack;
    for (const auto& m : request.messages) {
        haystack += m.text;
        haystack += '\n';
    }
    for (const auto& route : routes_) {
        if (!route.agent.empty() && route.agent != agent) continue;
        if (route.seed && (!seeded || *route.seed != request.seed)) continue;
        bool ok = true;
        for (const auto& needle : route.contains) ok = ok && contains(haystack, needle);
        for (const auto& needle : route.excludes) ok = ok && !contains(haystack, needle);
        if (!ok) continue;
        if (!route.variants.empty()) {
            auto it = route.variants.find(seeded ? request.seed : 0);
            if (it == route.variants.end()) continue;
            return std::make_pair(it->second, route.delay_ms);
        }
        return std::make_pair(route.text, route.delay_ms);
    }
    return std::nullopt;
}

ModelResponse MockBackend::complete(const ModelRequest& request) {
    validate_request(request);
    auto hit = lookup(request);
    if (!hit) {
        fail(Errc::fixture_miss, "no fixture for agent '" + agent_of(request.messages) +
                                     "' key " + fixture_key(request.messages) + " seed " +
                                     std::to_string(request.seed));
    }
    auto [text, delay_ms] = std::move(*hit);
    if (delay_ms > 0) {
        auto delay = std::chrono::milliseconds(delay_ms);
        std::this_thread::sleep_for(std::min(delay, timeout_));
        if (delay > timeout_) fail(Errc::backend_timeout, "mock fixture exceeded timeout");
    }
    ModelResponse response;
    response.backend_id = id_;
    response.usage.prompt_tokens = prompt_tokens(request);
    int completion = count_tokens(text);
    if (completion > request.max_tokens) {
        text = truncate_tokens(text, request.max_tokens);
        completion = request.max_tokens;
        response.truncated = true;
    }
    response.usage.completion_tokens = completion;
    response.text = std::move(text);
    return response;
}

Embedding MockBackend::embed(std::string_view text) { return hash_embedding(text, dim_); }

namespace {

struct Url {
    std::string origin;
    std::string path;
};

Url split_url(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) fail(Errc::invalid_descriptor, "endpoint needs a scheme: " + url);
    auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

HttpBackend::HttpBackend(std::string id, std::string endpoint, std::chrono::milliseconds timeout,
                         bool remote_embed, std::size_t dim)
    : id_(std::move(id)), endpoint_(std::move(endpoint)), timeout_(timeout),
      remote_embed_(remote_embed), dim_(dim) {
    split_url(endpoint_);
}

ModelResponse HttpBackend::complete(const ModelRequest& request) {
    validate_request(request);
    auto url = split_url(endpoint_);
    httplib::Client client(url.origin);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    json body;
    body["messages"] = json::array();
    for (const auto& m : request.messages)
        body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.text}});
    body["temperature"] = request.temperature;
    body["seed"] = request.seed;
    body["max_tokens"] = request.max_tokens;

    auto res = client.Post(url.path, body.dump(), "application/json");
    if (!res) {
        auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::Connection ||
            err == httplib::Error::ConnectionTimeout) {
            fail(err == httplib::Error::Connection ? Errc::backend_failure : Errc::backend_timeout,
                 "backend " + id_ + ": " + httplib::to_string(err));
        }
        fail(Errc::backend_failure, "backend " + id_ + ": " + httplib::to_string(err));
    }
    if (res->status != 200)
        fail(Errc::backend_failure, "backend " + id_ + " returned HTTP " + std::to_string(res->status));
    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::parse_error& e) {
        fail(Errc::backend_failure, "backend " + id_ + " sent invalid JSON: " + e.what());
    }
    ModelResponse response;
    response.backend_id = id_;
    response.text = reply.value("text", "");
    if (reply.contains("usage")) {
        response.usage.prompt_tokens = reply["usage"].value("prompt_tokens", 0);
        response.usage.completion_tokens = reply["usage"].value("completion_tokens", 0);
    }
    response.truncated = reply.value("truncated", false);
    return response;
}

Embedding HttpBackend::embed(std::string_view text) {
    if (!remote_embed_) return hash_embedding(text, dim_);
    auto url = split_url(endpoint_);
    httplib::Client client(url.origin);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_).count();
    client.set_read_timeout(secs, 0);
    auto path = url.path;
    if (path.empty() || path.back() != '/') path += '/';
    auto res = client.Post(path + "embed", json{{"text", text}}.dump(), "application/json");
    if (!res || res->status != 200) fail(Errc::backend_failure, "embedding request failed on " + id_);
    auto values = json::parse(res->body).at("values").get<Embedding>();
    if (values.size() != dim_) fail(Errc::backend_failure, "embedding dimension mismatch on " + id_);
    return values;
}

BackendDescriptor BackendDescriptor::from_json(const json& j) {
    BackendDescriptor d;
    d.id = j.value("id", "");
    d.transport = j.value("transport", "");
    d.fixture_dir = j.value("fixture_dir", "");
    d.endpoint = j.value("endpoint", "");
    d.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000));
    d.remote_embed = j.value("embed", false);
    return d;
}

Gateway::Gateway(std::size_t embedding_dim) : dim_(embedding_dim) {
    if (dim_ == 0) fail(Errc::invalid_argument, "embedding dimension must be positive");
}

std::string Gateway::register_backend(const BackendDescriptor& d) {
    if (d.id.empty()) fail(Errc::invalid_descriptor, "backend id is empty");
    if (d.transport == "mock") {
        if (d.fixture_dir.empty()) fail(Errc::invalid_descriptor, "mock backend needs fixture_dir");
        if (!fs::is_directory(d.fixture_dir))
            fail(Errc::invalid_descriptor, "fixture_dir is not a directory: " + d.fixture_dir);
        return register_backend(std::make_shared<MockBackend>(d.id, d.fixture_dir, dim_, d.timeout));
    }
    if (d.transport == "http") {
        if (d.endpoint.empty()) fail(Errc::invalid_descriptor, "http backend needs an endpoint URL");
        if (d.endpoint.find("://") == std::string::npos)
            fail(Errc::invalid_descriptor, "endpoint is not a URL: " + d.endpoint);
        return register_backend(
            std::make_shared<HttpBackend>(d.id, d.endpoint, d.timeout, d.remote_embed, dim_));
    }
    fail(Errc::invalid_descriptor, "unknown transport '" + d.transport + "'");
}

std::string Gateway::register_backend(std::shared_ptr<Backend> backend) {
    std::unique_lock lock(mu_);
    const auto& id = backend->id();
    if (backends_.count(id)) fail(Errc::duplicate_id, "backend '" + id + "' already registered");
    backends_.emplace(id, backend);
    if (default_.empty()) default_ = id;
    if (const char* env = std::getenv(kBackendEnvVar); env && id == env) default_ = id;
    return id;
}

std::shared_ptr<Backend> Gateway::find(std::string_view id) const {
    std::shared_lock lock(mu_);
    std::string_view key = id.empty() ? std::string_view(default_) : id;
    auto it = backends_.find(key);
    if (it == backends_.end()) fail(Errc::unknown_backend, "backend '" + std::string(key) + "'");
    return it->second;
}

ModelResponse Gateway::complete(const ModelRequest& request) const {
    return find(request.backend_id)->complete(request);
}

Embedding Gateway::embed(std::string_view text, std::string_view backend_id) const {
    return find(backend_id)->embed(text);
}

void Gateway::set_default(const std::string& backend_id) {
    std::unique_lock lock(mu_);
    if (!backends_.count(backend_id)) fail(Errc::unknown_backend, "backend '" + backend_id + "'");
    default_ = backend_id;
}

std::string Gateway::default_backend() const {
    std::shared_lock lock(mu_);
    return default_;
}

bool Gateway::has_backend(std::string_view id) const {
    std::shared_lock lock(mu_);
    return backends_.find(id) != backends_.end();
}

}  // namespace climagent::gateway
