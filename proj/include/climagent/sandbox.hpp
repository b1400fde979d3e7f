#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "climagent/util.hpp"

// Subprocess execution with a wall-clock timeout, output caps, rlimits and
// (where the kernel supports it) Landlock filesystem scoping.
namespace climagent::sandbox {

// Landlock ABI version, or 0 when unavailable.
int landlock_abi();

struct Policy {
    bool confine = true;                 // ignored when Landlock is unavailable
    std::vector<fs::path> writable;      // full access below these directories
    std::vector<fs::path> readable;      // read + execute below these directories
    std::vector<fs::path> exec_files;    // single files granted read + execute
};

// Directories every interpreter needs to start.
std::vector<fs::path> system_read_paths();

struct ProcessSpec {
    std::vector<std::string> argv;  // argv[0] must be an absolute path
    std::vector<std::string> env;   // KEY=VALUE
    fs::path cwd;
    std::chrono::milliseconds timeout{120000};
    std::size_t output_cap = 1 << 20;            // bytes kept per stream
    std::uint64_t file_size_limit = 256ull << 20;  // RLIMIT_FSIZE
};

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    int term_signal = 0;
    std::string out;
    std::string err;
    bool out_truncated = false;
    bool err_truncated = false;
    bool confined = false;
    double wall_seconds = 0.0;
};

// Throws sandbox_setup_failure when the process cannot be started or the
// requested confinement cannot be installed.
ProcessResult run(const ProcessSpec& spec, const Policy& policy);

}  // namespace climagent::sandbox
