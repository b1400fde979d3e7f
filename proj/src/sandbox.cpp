#include "climagent/sandbox.hpp"

#include <fcntl.h>
#include <linux/landlock.h>
#include <poll.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "climagent/error.hpp"

namespace climagent::sandbox {

namespace {

// Newer rights are not in every installed header.
constexpr std::uint64_t kAccessRefer = 1ull << 13;
constexpr std::uint64_t kAccessTruncate = 1ull << 14;

constexpr std::uint64_t kAbi1All = (1ull << 13) - 1;
constexpr std::uint64_t kReadExec =
    LANDLOCK_ACCESS_FS_EXECUTE | LANDLOCK_ACCESS_FS_READ_FILE | LANDLOCK_ACCESS_FS_READ_DIR;
constexpr std::uint64_t kFileRights = LANDLOCK_ACCESS_FS_EXECUTE | LANDLOCK_ACCESS_FS_WRITE_FILE |
                                      LANDLOCK_ACCESS_FS_READ_FILE | kAccessTruncate;

struct Fd {
    int fd = -1;
    Fd() = default;
    explicit Fd(int f) : fd(f) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    ~Fd() { reset(); }
    void reset() {
        if (fd >= 0) ::close(fd);
        fd = -1;
    }
};

std::uint64_t handled_rights(int abi) {
    std::uint64_t h = kAbi1All;
    if (abi >= 2) h |= kAccessRefer;
    if (abi >= 3) h |= kAccessTruncate;
    return h;
}

void add_path_rule(int ruleset, const fs::path& p, std::uint64_t rights) {
    int fd = ::open(p.c_str(), O_PATH | O_CLOEXEC);
    if (fd < 0) return;  // absent paths simply grant nothing
    struct stat st {};
    if (::fstat(fd, &st) == 0 && !S_ISDIR(st.st_mode)) rights &= kFileRights;
    landlock_path_beneath_attr attr{};
    attr.allowed_access = rights;
    attr.parent_fd = fd;
    long rc = ::syscall(SYS_landlock_add_rule, ruleset, LANDLOCK_RULE_PATH_BENEATH, &attr, 0);
    int saved = errno;
    ::close(fd);
    if (rc != 0) fail(Errc::sandbox_setup_failure, "landlock_add_rule(" + p.string() + "): " + std::strerror(saved));
}

int build_ruleset(const Policy& policy, int abi) {
    const auto handled = handled_rights(abi);
    landlock_ruleset_attr attr{};
    attr.handled_access_fs = handled;
    long fd = ::syscall(SYS_landlock_create_ruleset, &attr, sizeof attr, 0);
    if (fd < 0) fail(Errc::sandbox_setup_failure, std::string("landlock_create_ruleset: ") + std::strerror(errno));
    try {
        for (const auto& p : policy.writable) add_path_rule(int(fd), p, handled);
        for (const auto& p : policy.readable) add_path_rule(int(fd), p, kReadExec);
        for (const auto& p : policy.exec_files) add_path_rule(int(fd), p, kReadExec);
        add_path_rule(int(fd), "/dev/null",
                      (LANDLOCK_ACCESS_FS_READ_FILE | LANDLOCK_ACCESS_FS_WRITE_FILE | kAccessTruncate) & handled);
    } catch (...) {
        ::close(int(fd));
        throw;
    }
    return int(fd);
}

void drain(int fd, std::string& sink, bool& truncated, std::size_t cap, bool& open) {
    char buf[8192];
    for (;;) {
        ssize_t n = ::read(fd, buf, sizeof buf);
        if (n > 0) {
            std::size_t room = sink.size() < cap ? cap - sink.size() : 0;
            if (std::size_t(n) > room) truncated = true;
            sink.append(buf, std::min<std::size_t>(room, std::size_t(n)));
            continue;
        }
        if (n == 0) open = false;
        if (n < 0 && errno == EINTR) continue;
        return;  // EAGAIN or EOF
    }
}

}  // namespace

int landlock_abi() {
    static const int abi = [] {
        long v = ::syscall(SYS_landlock_create_ruleset, nullptr, 0, LANDLOCK_CREATE_RULESET_VERSION);
        return v < 0 ? 0 : int(v);
    }();
    return abi;
}

std::vector<fs::path> system_read_paths() {
    return {"/usr", "/bin", "/sbin", "/lib", "/lib64", "/lib32", "/etc", "/proc/self", "/dev/urandom"};
}

ProcessResult run(const ProcessSpec& spec, const Policy& policy) {
    if (spec.argv.empty() || !fs::path(spec.argv[0]).is_absolute())
        fail(Errc::sandbox_setup_failure, "argv[0] must be an absolute path");
    if (!fs::exists(spec.argv[0])) fail(Errc::sandbox_setup_failure, "interpreter not found: " + spec.argv[0]);

    ProcessResult result;
    const int abi = landlock_abi();
    Fd ruleset;
    if (policy.confine && abi > 0) {
        ruleset.fd = build_ruleset(policy, abi);
        result.confined = true;
    }

    // Everything the child touches is prepared before fork.
    std::vector<char*> argv, envp;
    for (const auto& a : spec.argv) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    for (const auto& e : spec.env) envp.push_back(const_cast<char*>(e.c_str()));
    envp.push_back(nullptr);
    const std::string cwd = spec.cwd.string();
    rlimit fsize{spec.file_size_limit, spec.file_size_limit};
    auto cpu_secs = rlim_t(std::chrono::duration_cast<std::chrono::seconds>(spec.timeout).count() + 5);
    rlimit cpu{cpu_secs, cpu_secs + 1};

    int out_pipe[2], err_pipe[2], status_pipe[2];
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) fail(Errc::sandbox_setup_failure, "pipe2 failed");
    Fd out_r(out_pipe[0]), out_w(out_pipe[1]);
    if (::pipe2(err_pipe, O_CLOEXEC) != 0) fail(Errc::sandbox_setup_failure, "pipe2 failed");
    Fd err_r(err_pipe[0]), err_w(err_pipe[1]);
    if (::pipe2(status_pipe, O_CLOEXEC) != 0) fail(Errc::sandbox_setup_failure, "pipe2 failed");
    Fd st_r(status_pipe[0]), st_w(status_pipe[1]);

    const auto started = std::chrono::steady_clock::now();
    pid_t pid = ::fork();
    if (pid < 0) fail(Errc::sandbox_setup_failure, std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        auto die = [&](int stage) {
            int payload[2] = {stage, errno};
            (void)!::write(st_w.fd, payload, sizeof payload);
            ::_exit(127);
        };
        ::setpgid(0, 0);
        int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull < 0 || ::dup2(devnull, 0) < 0) die(1);
        if (::dup2(out_w.fd, 1) < 0 || ::dup2(err_w.fd, 2) < 0) die(1);
        if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) die(2);
        ::setrlimit(RLIMIT_FSIZE, &fsize);
        ::setrlimit(RLIMIT_CPU, &cpu);
        ::signal(SIGPIPE, SIG_DFL);
        if (ruleset.fd >= 0) {
            if (::prctl(PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0) die(3);
            if (::syscall(SYS_landlock_restrict_self, ruleset.fd, 0) != 0) die(4);
        }
        ::execve(argv[0], argv.data(), envp.data());
        die(5);
    }
    ::setpgid(pid, pid);  // also done in the child; whichever runs first wins
    out_w.reset();
    err_w.reset();
    st_w.reset();
    ruleset.reset();

    int payload[2] = {0, 0};
    ssize_t got;
    do {
        got = ::read(st_r.fd, payload, sizeof payload);
    } while (got < 0 && errno == EINTR);
    if (got == sizeof payload) {
        ::waitpid(pid, nullptr, 0);
        static const char* stages[] = {"", "stdio", "chdir", "no_new_privs", "landlock_restrict_self", "execve"};
        fail(Errc::sandbox_setup_failure,
             std::string("child setup failed at ") + stages[payload[0]] + ": " + std::strerror(payload[1]));
    }

    ::fcntl(out_r.fd, F_SETFL, O_NONBLOCK);
    ::fcntl(err_r.fd, F_SETFL, O_NONBLOCK);
    bool out_open = true, err_open = true, exited = false;
    int wstatus = 0;
    const auto deadline = started + spec.timeout;
    auto exited_at = deadline;
    while (out_open || err_open || !exited) {
        if (!exited) {
            pid_t w = ::waitpid(pid, &wstatus, WNOHANG);
            if (w == pid) {
                exited = true;
                exited_at = std::chrono::steady_clock::now();
                ::kill(-pid, SIGKILL);  // stray background children keep pipes open
            }
        }
        auto now = std::chrono::steady_clock::now();
        if (!exited && now >= deadline) {
            ::kill(-pid, SIGKILL);
            ::waitpid(pid, &wstatus, 0);
            exited = true;
            exited_at = now;
            result.timed_out = true;
        }
        // A process that left the group could hold the pipes forever.
        if (exited && now - exited_at > std::chrono::seconds(2)) break;
        pollfd fds[2];
        int n = 0;
        if (out_open) fds[n++] = {out_r.fd, POLLIN, 0};
        if (err_open) fds[n++] = {err_r.fd, POLLIN, 0};
        if (n == 0) {
            if (!exited) ::usleep(5000);
            continue;
        }
        int wait_ms = exited ? 50 : 20;
        ::poll(fds, nfds_t(n), wait_ms);
        if (out_open) drain(out_r.fd, result.out, result.out_truncated, spec.output_cap, out_open);
        if (err_open) drain(err_r.fd, result.err, result.err_truncated, spec.output_cap, err_open);
    }
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (WIFEXITED(wstatus)) {
        result.exit_code = WEXITSTATUS(wstatus);
    } else if (WIFSIGNALED(wstatus)) {
        result.term_signal = WTERMSIG(wstatus);
        result.exit_code = 128 + result.term_signal;
    }
    return result;
}

}  // namespace climagent::sandbox
