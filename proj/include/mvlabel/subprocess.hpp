#ifndef MVLABEL_SUBPROCESS_HPP
#define MVLABEL_SUBPROCESS_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mvlabel {

struct ProcessSpec {
    std::vector<std::string> argv;              // argv[0] resolved via PATH
    std::string workdir;                        // empty = inherit
    std::map<std::string, std::string> env;     // overrides on top of inherited env
    double timeout_s = 0.0;                     // 0 = no timeout
    std::filesystem::path stdout_path;          // empty = inherit
    std::filesystem::path stderr_path;          // empty = inherit
};

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    bool signaled = false;
    int term_signal = 0;
    double wall_time_s = 0.0;

    bool ok() const { return !timed_out && !signaled && exit_code == 0; }
};

// Runs the child to completion (or timeout, then SIGKILL) with stdout and
// stderr captured to files. Throws IoError when the child cannot be
// spawned at all.
ProcessResult run_process(const ProcessSpec& spec);

} // namespace mvlabel

#endif
