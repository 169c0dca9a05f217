#include "vulnloop/process.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace vulnloop;
using namespace std::chrono_literals;

TEST(Process, CapturesOutputAndExitCode) {
    const auto r = run_shell("echo out; echo err >&2; exit 3", ".", 10s);
    EXPECT_EQ(r.exit_code, 3);
    EXPECT_FALSE(r.timed_out);
    EXPECT_FALSE(r.signaled);
    EXPECT_NE(r.output.find("out"), std::string::npos);
    EXPECT_NE(r.output.find("err"), std::string::npos);
}

TEST(Process, NoShellInterpretation) {
    const auto r = run_process({"/bin/echo", "$HOME; rm -rf x"}, ".", 10s);
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_EQ(r.output, "$HOME; rm -rf x\n");
}

TEST(Process, TimeoutKills) {
    const auto start = std::chrono::steady_clock::now();
    const auto r = run_shell("sleep 5", ".", 200ms);
    EXPECT_TRUE(r.timed_out);
    EXPECT_LT(std::chrono::steady_clock::now() - start, 4s);
}

TEST(Process, SignalReported) {
    const auto r = run_shell("kill -SEGV $$", ".", 10s);
    EXPECT_TRUE(r.signaled);
    EXPECT_FALSE(r.timed_out);
}

TEST(Process, MissingExecutable) {
    const auto r = run_process({"/nonexistent/binary"}, ".", 10s);
    EXPECT_NE(r.exit_code, 0);
}

TEST(Process, RunsInWorkingDirectory) {
    TempDir dir("vulnloop-proc");
    const auto r = run_process({"/bin/pwd"}, dir.path(), 10s);
    EXPECT_EQ(r.output, std::filesystem::canonical(dir.path()).string() + "\n");
}

TEST(TempDir, RemovedUnlessKept) {
    std::filesystem::path gone;
    std::filesystem::path kept;
    {
        TempDir a("vulnloop-a");
        gone = a.path();
        std::ofstream(gone / "f") << "x";
        TempDir b("vulnloop-b");
        b.keep();
        kept = b.path();
        EXPECT_NE(gone, kept);
    }
    EXPECT_FALSE(std::filesystem::exists(gone));
    EXPECT_TRUE(std::filesystem::exists(kept));
    std::filesystem::remove_all(kept);
}
