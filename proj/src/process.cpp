#include "vulnloop/process.hpp"

#include "vulnloop/common.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>

namespace vulnloop {

namespace {

using Clock = std::chrono::steady_clock;

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv,
                          const std::filesystem::path& cwd,
                          std::chrono::milliseconds timeout) {
    if (argv.empty()) throw Error(ErrorKind::InvalidArgument, "run_process: empty argv");

    int pipefd[2];
    if (::pipe2(pipefd, O_CLOEXEC) != 0) {
        throw Error(ErrorKind::Io, std::string("pipe failed: ") + std::strerror(errno));
    }

    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);
    const std::string cwd_str = cwd.string();

    const pid_t pid = ::fork();
    if (pid < 0) {
        ::close(pipefd[0]);
        ::close(pipefd[1]);
        throw Error(ErrorKind::Io, std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
        // child: only async-signal-safe calls from here on
        ::setpgid(0, 0);
        ::dup2(pipefd[1], STDOUT_FILENO);
        ::dup2(pipefd[1], STDERR_FILENO);
        const int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
        if (!cwd_str.empty() && ::chdir(cwd_str.c_str()) != 0) ::_exit(126);
        ::execvp(cargv[0], cargv.data());
        static const char msg[] = "exec failed\n";
        [[maybe_unused]] auto n = ::write(STDERR_FILENO, msg, sizeof(msg) - 1);
        ::_exit(127);
    }
    ::close(pipefd[1]);

    ProcessResult result;
    const auto deadline = Clock::now() + timeout;
    char buf[4096];
    bool open = true;
    while (open) {
        const auto remaining =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
        if (remaining.count() <= 0) {
            result.timed_out = true;
            ::kill(-pid, SIGKILL);
            ::kill(pid, SIGKILL);
            break;
        }
        pollfd pfd{pipefd[0], POLLIN, 0};
        const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining.count(), 1000)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (rc == 0) continue;
        const ssize_t n = ::read(pipefd[0], buf, sizeof(buf));
        if (n > 0) {
            result.output.append(buf, static_cast<std::size_t>(n));
        } else if (n == 0 || errno != EINTR) {
            open = false;
        }
    }
    ::close(pipefd[0]);

    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_code = 128 + WTERMSIG(status);
        result.signaled = !result.timed_out;
    }
    return result;
}

ProcessResult run_shell(const std::string& command, const std::filesystem::path& cwd,
                        std::chrono::milliseconds timeout) {
    return run_process({"/bin/sh", "-c", command}, cwd, timeout);
}

TempDir::TempDir(const std::string& prefix) {
    std::string templ =
        (std::filesystem::temp_directory_path() / (prefix + "-XXXXXX")).string();
    if (::mkdtemp(templ.data()) == nullptr) {
        throw Error(ErrorKind::Io, std::string("mkdtemp failed: ") + std::strerror(errno));
    }
    path_ = templ;
}

TempDir::~TempDir() {
    if (keep_) return;
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

}  // namespace vulnloop
