#include "mvlabel/subprocess.hpp"

#include "mvlabel/errors.hpp"

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

namespace mvlabel {

namespace {

[[noreturn]] void child_fail(const char* what) {
    // In the child after fork: write a terse note and bail hard.
    const char* err = std::strerror(errno);
    (void)!::write(STDERR_FILENO, what, std::strlen(what));
    (void)!::write(STDERR_FILENO, ": ", 2);
    (void)!::write(STDERR_FILENO, err, std::strlen(err));
    (void)!::write(STDERR_FILENO, "\n", 1);
    ::_exit(127);
}

void redirect(const std::filesystem::path& path, int target_fd) {
    if (path.empty()) return;
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) child_fail("open redirect target");
    if (::dup2(fd, target_fd) < 0) child_fail("dup2");
    ::close(fd);
}

} // namespace

ProcessResult run_process(const ProcessSpec& spec) {
    if (spec.argv.empty()) throw ConfigError("subprocess argv must be non-empty");

    std::vector<char*> argv;
    argv.reserve(spec.argv.size() + 1);
    for (const std::string& a : spec.argv) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);

    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) throw IoError(std::string("fork failed: ") + std::strerror(errno));

    if (pid == 0) {
        if (!spec.workdir.empty() && ::chdir(spec.workdir.c_str()) != 0)
            child_fail("chdir to workdir");
        for (const auto& [key, value] : spec.env)
            if (::setenv(key.c_str(), value.c_str(), 1) != 0) child_fail("setenv");
        redirect(spec.stdout_path, STDOUT_FILENO);
        redirect(spec.stderr_path, STDERR_FILENO);
        ::execvp(argv[0], argv.data());
        child_fail("execvp");
    }

    ProcessResult result;
    int status = 0;
    bool done = false;
    while (!done) {
        const pid_t r = ::waitpid(pid, &status, WNOHANG);
        if (r == pid) {
            done = true;
            break;
        }
        if (r < 0 && errno != EINTR)
            throw IoError(std::string("waitpid failed: ") + std::strerror(errno));
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (spec.timeout_s > 0.0 && elapsed > spec.timeout_s) {
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            result.timed_out = true;
            done = true;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }

    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.signaled = true;
        result.term_signal = WTERMSIG(status);
        result.exit_code = 128 + result.term_signal;
    }
    return result;
}

} // namespace mvlabel
