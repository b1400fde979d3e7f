#include <gtest/gtest.h>

#include <fstream>

#include "climagent/error.hpp"
#include "climagent/sandbox.hpp"
#include "support.hpp"

using namespace climagent;
using namespace climagent::sandbox;

namespace {

ProcessSpec shell(const std::string& script, const fs::path& cwd) {
    ProcessSpec s;
    s.argv = {"/bin/sh", "-c", script};
    s.env = {"PATH=/usr/bin:/bin", "HOME=" + cwd.string()};
    s.cwd = cwd;
    s.timeout = std::chrono::seconds(20);
    return s;
}

Policy confined_to(const fs::path& ws) {
    Policy p;
    p.writable = {ws};
    p.readable = system_read_paths();
    return p;
}

}  // namespace

TEST(Sandbox, CapturesStreamsAndExitCode) {
    test::TempDir dir;
    auto r = run(shell("echo out; echo err >&2; exit 3", dir.path()), Policy{false});
    EXPECT_EQ(r.exit_code, 3);
    EXPECT_EQ(r.out, "out\n");
    EXPECT_EQ(r.err, "err\n");
    EXPECT_FALSE(r.timed_out);
    EXPECT_FALSE(r.confined);
}

TEST(Sandbox, EnvironmentIsExactlyTheSpec) {
    test::TempDir dir;
    ::setenv("CLIMAGENT_LEAK_CHECK", "leaked", 1);
    auto spec = shell("echo \"[$CLIMAGENT_LEAK_CHECK][$FOO]\"; pwd", dir.path());
    spec.env.push_back("FOO=bar");
    auto r = run(spec, Policy{false});
    EXPECT_EQ(r.out, "[][bar]\n" + fs::canonical(dir.path()).string() + "\n");
}

TEST(Sandbox, TimeoutKillsProcessGroup) {
    test::TempDir dir;
    auto spec = shell("sleep 30 & sleep 30", dir.path());
    spec.timeout = std::chrono::milliseconds(300);
    auto r = run(spec, Policy{false});
    EXPECT_TRUE(r.timed_out);
    EXPECT_LT(r.wall_seconds, 5.0);
}

TEST(Sandbox, OutputCapTruncates) {
    test::TempDir dir;
    auto spec = shell("i=0; while [ $i -lt 2000 ]; do echo 0123456789; i=$((i+1)); done", dir.path());
    spec.output_cap = 1000;
    auto r = run(spec, Policy{false});
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_TRUE(r.out_truncated);
    EXPECT_EQ(r.out.size(), 1000u);
    EXPECT_FALSE(r.err_truncated);
}

TEST(Sandbox, FileSizeLimitEnforced) {
    test::TempDir dir;
    auto spec = shell("head -c 200000 /dev/zero > big.bin", dir.path());
    spec.file_size_limit = 50000;
    auto r = run(spec, Policy{false});
    EXPECT_TRUE(r.exit_code != 0 || r.term_signal != 0);
    EXPECT_LE(fs::file_size(dir / "big.bin"), 50000u);
}

TEST(Sandbox, SetupFailures) {
    test::TempDir dir;
    auto spec = shell("true", dir.path());
    spec.argv[0] = "sh";
    EXPECT_THROW(run(spec, Policy{false}), Error);
    spec.argv[0] = "/no/such/interpreter";
    try {
        run(spec, Policy{false});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::sandbox_setup_failure);
    }
}

TEST(Sandbox, ConfinementBlocksOutsideWritesAndReads) {
    if (landlock_abi() == 0) GTEST_SKIP() << "Landlock unavailable on this kernel";
    test::TempDir ws, outside;
    std::ofstream(outside / "secret.txt") << "secret";
    auto script = "echo inside > inside.txt && echo ok1; "
                  "echo x > '" + (outside / "escape.txt").string() + "' 2>/dev/null || echo blocked-write; "
                  "cat '" + (outside / "secret.txt").string() + "' 2>/dev/null || echo blocked-read; "
                  "ls '" + outside.path().string() + "' >/dev/null 2>&1 || echo blocked-list";
    auto r = run(shell(script, ws.path()), confined_to(ws.path()));
    EXPECT_TRUE(r.confined);
    EXPECT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("ok1"), std::string::npos);
    EXPECT_NE(r.out.find("blocked-write"), std::string::npos);
    EXPECT_NE(r.out.find("blocked-read"), std::string::npos);
    EXPECT_NE(r.out.find("blocked-list"), std::string::npos);
    EXPECT_EQ(r.out.find("secret"), std::string::npos);
    EXPECT_TRUE(fs::exists(ws / "inside.txt"));
    EXPECT_FALSE(fs::exists(outside / "escape.txt"));
}

TEST(Sandbox, ReadableTreeIsNotWritable) {
    if (landlock_abi() == 0) GTEST_SKIP() << "Landlock unavailable on this kernel";
    test::TempDir ws, data;
    std::ofstream(data / "in.txt") << "payload";
    auto policy = confined_to(ws.path());
    policy.readable.push_back(data.path());
    auto script = "cat '" + (data / "in.txt").string() + "'; echo; "
                  "echo y > '" + (data / "in.txt").string() + "' 2>/dev/null || echo blocked";
    auto r = run(shell(script, ws.path()), policy);
    EXPECT_EQ(r.out, "payload\nblocked\n");
    EXPECT_EQ(read_file(data / "in.txt"), "payload");
}

TEST(Sandbox, ExecFileGrantIsNarrow) {
    if (landlock_abi() == 0) GTEST_SKIP() << "Landlock unavailable on this kernel";
    test::TempDir ws, bin;
    auto tool = bin / "tool.sh";
    std::ofstream(tool) << "#!/bin/sh\necho tool-ran\n";
    fs::permissions(tool, fs::perms::owner_all);
    std::ofstream(bin / "other.txt") << "no";
    auto policy = confined_to(ws.path());
    policy.exec_files = {tool};
    auto r = run(shell("'" + tool.string() + "'; cat '" + (bin / "other.txt").string() + "' 2>/dev/null || echo blocked",
                       ws.path()),
                 policy);
    EXPECT_EQ(r.out, "tool-ran\nblocked\n");
}
