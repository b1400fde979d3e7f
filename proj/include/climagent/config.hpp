#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "climagent/gateway.hpp"
#include "climagent/util.hpp"

namespace climagent::service {

// Every key can be set in the JSON config file, overridden by the
// environment variable CLIMAGENT_<KEY upper-cased>, and again by a CLI flag.
struct ServiceConfig {
    std::string data_dir = "climagent-data";  // run store root
    std::string catalog_index = "fixtures/catalog/catalog.jsonl";
    std::string data_root = "climagent-data/grids";
    std::string library_dir = "climagent-data/library";
    std::string library_seed = "fixtures/library/seed.jsonl";
    std::string web_dir = "fixtures/web";
    std::string mock_dir = "fixtures/mock";  // fixture directory of the default mock backend
    std::string tools_binary;  // defaults to climate-tools next to the running binary
    std::string suite = "fixtures/suite/tasks.jsonl";
    std::string scores = "fixtures/scores/demo_scores.csv";
    std::string host = "127.0.0.1";
    int port = 8080;
    int worker_count = 2;
    int expert_count = 10;
    int candidate_count = 3;
    int debug_cap = 15;
    int exec_timeout_s = 120;
    double template_threshold = 0.92;
    bool confine = true;
    bool confidence_weighted = false;
    std::vector<gateway::BackendDescriptor> backends;  // empty -> one mock backend on fixtures/mock

    json to_json() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

// Scalar keys the precedence chain understands.
std::vector<std::string> config_keys();

// defaults < file < env < cli. Unknown keys and unparsable values raise
// invalid_argument.
ServiceConfig load_config(const std::optional<fs::path>& file, const EnvLookup& env,
                          const std::map<std::string, std::string>& cli);

// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

}  // namespace climagent::service
