#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace vulnloop {

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    /// True when the child was terminated by a signal other than our timeout kill.
    bool signaled = false;
    /// stdout and stderr, interleaved.
    std::string output;
};

/// Runs argv[0] with the given arguments (no shell), capturing combined output.
/// The child is killed with SIGKILL once `timeout` elapses.
ProcessResult run_process(const std::vector<std::string>& argv,
                          const std::filesystem::path& cwd,
                          std::chrono::milliseconds timeout);

/// Convenience wrapper: `/bin/sh -c command`.
ProcessResult run_shell(const std::string& command, const std::filesystem::path& cwd,
                        std::chrono::milliseconds timeout);

/// RAII temporary directory, removed on destruction unless released.
class TempDir {
public:
    explicit TempDir(const std::string& prefix = "vulnloop");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    void keep() noexcept { keep_ = true; }

private:
    std::filesystem::path path_;
    bool keep_ = false;
};

}  // namespace vulnloop
