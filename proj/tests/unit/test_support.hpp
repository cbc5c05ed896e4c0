#ifndef MVLABEL_TEST_SUPPORT_HPP
#define MVLABEL_TEST_SUPPORT_HPP

#include "mvlabel/subprocess.hpp"
#include "mvlabel/util.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <unistd.h>

namespace mvtest {

// Unique scratch directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("mvlabel_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Runs the real CLI binary with stdout/stderr captured.
inline CliResult run_cli(const std::vector<std::string>& args, const TempDir& dir,
                         const std::map<std::string, std::string>& env = {}) {
    static std::atomic<unsigned> counter{0};
    const unsigned id = counter++;
    mvlabel::ProcessSpec spec;
    spec.argv.push_back(MVLABEL_CLI_EXE);
    spec.argv.insert(spec.argv.end(), args.begin(), args.end());
    spec.env = env;
    spec.timeout_s = 120.0;
    spec.stdout_path = dir.path() / ("cli_stdout_" + std::to_string(id) + ".txt");
    spec.stderr_path = dir.path() / ("cli_stderr_" + std::to_string(id) + ".txt");
    const mvlabel::ProcessResult result = mvlabel::run_process(spec);
    CliResult out;
    out.exit_code = result.exit_code;
    out.out = mvlabel::read_file(spec.stdout_path);
    out.err = mvlabel::read_file(spec.stderr_path);
    return out;
}

} // namespace mvtest

#endif
