#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "climagent/util.hpp"

// Uniform access to language-model completion and text embedding.
namespace climagent::gateway {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

struct Message {
    Role role = Role::user;
    std::string text;

    bool operator==(const Message&) const = default;
};

struct ModelRequest {
    std::vector<Message> messages;
    double temperature = 0.0;
    std::int64_t seed = 0;
    int max_tokens = 4096;
    std::string backend_id;  // empty selects the gateway default
};

struct Usage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct ModelResponse {
    std::string text;
    std::string backend_id;
    Usage usage;
    bool truncated = false;
};

using Embedding = std::vector<double>;

inline constexpr std::size_t kDefaultEmbeddingDim = 256;

// Lowercase, split on non-alphanumerics.
std::vector<std::string> tokenize(std::string_view text);

// Bag of FNV-1a token hashes folded into `dim` buckets, then L2-normalized.
// Text without tokens maps to the zero vector.
Embedding hash_embedding(std::string_view text, std::size_t dim = kDefaultEmbeddingDim);

// Zero when either side has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);

// SHA-256 over the canonical JSON rendering [[role, text], ...].
std::string fixture_key(const std::vector<Message>& messages);

// First line of the system message, "agent: <name>", names the calling agent.
std::string agent_of(const std::vector<Message>& messages);

class Backend {
public:
    virtual ~Backend() = default;
    virtual const std::string& id() const = 0;
    virtual ModelResponse complete(const ModelRequest& request) = 0;
    virtual Embedding embed(std::string_view text) = 0;
};

// Replays fixtures. Lookup order for a request:
//   1. <dir>/<key>.s<seed>.json   (only when temperature > 0)
//   2. <dir>/<key>.json
//   3. in-memory fixtures added with add_fixture / add_route
//   4. <dir>/routes.json entries, first match wins
// Each fixture is {"text": ..., "delay_ms"?: n}; routes may use "text_file"
// (relative to the fixture dir) or "variants": {"<seed>": text}.
class MockBackend : public Backend {
public:
    struct Route {
        std::string agent;
        std::vector<std::string> contains;
        std::vector<std::string> excludes;
        std::optional<std::int64_t> seed;
        std::string text;
        std::map<std::int64_t, std::string> variants;
        int delay_ms = 0;
    };

    MockBackend(std::string id, fs::path fixture_dir,
                std::size_t dim = kDefaultEmbeddingDim,
                std::chrono::milliseconds timeout = std::chrono::seconds(30));

    const std::string& id() const override { return id_; }
    ModelResponse complete(const ModelRequest& request) override;
    Embedding embed(std::string_view text) override;

    void add_fixture(const std::vector<Message>& messages, std::optional<std::int64_t> seed,
                     std::string text);
    void add_route(Route route);

    const fs::path& fixture_dir() const { return dir_; }

private:
    std::optional<std::pair<std::string, int>> lookup(const ModelRequest& request);
    void load_routes();

    std::string id_;
    fs::path dir_;
    std::size_t dim_;
    std::chrono::milliseconds timeout_;
    std::mutex mu_;
    std::map<std::string, std::string> memory_;
    std::vector<Route> routes_;
    bool routes_loaded_ = false;
};

// POST <endpoint> with {messages, temperature, seed, max_tokens}; expects
// {text, usage:{prompt_tokens, completion_tokens}}.
class HttpBackend : public Backend {
public:
    HttpBackend(std::string id, std::string endpoint, std::chrono::milliseconds timeout,
                bool remote_embed, std::size_t dim = kDefaultEmbeddingDim);

    const std::string& id() const override { return id_; }
    ModelResponse complete(const ModelRequest& request) override;
    Embedding embed(std::string_view text) override;

private:
    std::string id_;
    std::string endpoint_;
    std::chrono::milliseconds timeout_;
    bool remote_embed_;
    std::size_t dim_;
};

struct BackendDescriptor {
    std::string id;
    std::string transport;  // "mock" | "http"
    std::string fixture_dir;
    std::string endpoint;
    std::chrono::milliseconds timeout{30000};
    bool remote_embed = false;

    static BackendDescriptor from_json(const json& j);
};

class Gateway {
public:
    explicit Gateway(std::size_t embedding_dim = kDefaultEmbeddingDim);

    std::string register_backend(const BackendDescriptor& descriptor);
    std::string register_backend(std::shared_ptr<Backend> backend);

    ModelResponse complete(const ModelRequest& request) const;
    Embedding embed(std::string_view text, std::string_view backend_id = {}) const;

    void set_default(const std::string& backend_id);
    std::string default_backend() const;
    std::size_t dim() const { return dim_; }
    bool has_backend(std::string_view id) const;

private:
    std::shared_ptr<Backend> find(std::string_view id) const;

    std::size_t dim_;
    mutable std::shared_mutex mu_;
    std::map<std::string, std::shared_ptr<Backend>, std::less<>> backends_;
    std::string default_;
};

// Environment variable naming the default backend id.
inline constexpr const char* kBackendEnvVar = "CLIMAGENT_BACKEND";

}  // namespace climagent::gateway
