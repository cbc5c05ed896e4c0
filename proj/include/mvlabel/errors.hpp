#ifndef MVLABEL_ERRORS_HPP
#define MVLABEL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mvlabel {

// Failure taxonomy shared by the library and the CLI exit codes:
//   Usage    -> 1  (bad flags, invalid parameters, inconsistent plans)
//   Data     -> 2  (malformed or inconsistent input files)
//   Adapter  -> 3  (external detector/trainer process failures)
//   Internal -> 4  (everything else)
enum class ErrorKind { Usage = 1, Data = 2, Adapter = 3, Internal = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::Usage, msg) {}
};

struct OutOfBoundsError : Error {
    explicit OutOfBoundsError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

struct BehindCameraError : Error {
    explicit BehindCameraError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

struct InvalidKernelSpecError : Error {
    explicit InvalidKernelSpecError(const std::string& msg) : Error(ErrorKind::Usage, msg) {}
};

// Parse failures carry file context; line 0 means "not line-oriented".
class ParseError : public Error {
public:
    ParseError(const std::string& path, long line, const std::string& msg)
        : Error(ErrorKind::Data, format(path, line, msg)), path_(path), line_(line) {}

    const std::string& path() const noexcept { return path_; }
    long line() const noexcept { return line_; }

private:
    static std::string format(const std::string& path, long line, const std::string& msg) {
        std::string s = path;
        if (line > 0) s += ":" + std::to_string(line);
        s += ": " + msg;
        return s;
    }
    std::string path_;
    long line_ = 0;
};

struct DuplicateFrameError : ParseError {
    DuplicateFrameError(const std::string& path, long line, const std::string& frame_id)
        : ParseError(path, line, "duplicate frame_id \"" + frame_id + "\"") {}
};

struct UnitError : Error {
    explicit UnitError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

struct InvalidRatiosError : Error {
    explicit InvalidRatiosError(const std::string& msg) : Error(ErrorKind::Usage, msg) {}
};

struct InfeasibleSceneError : Error {
    explicit InfeasibleSceneError(const std::string& msg) : Error(ErrorKind::Usage, msg) {}
};

struct MissingComponentError : Error {
    explicit MissingComponentError(const std::string& msg) : Error(ErrorKind::Usage, msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

// External adapter failures, one cause per spec'd failure mode.
class AdapterError : public Error {
public:
    enum class Cause { Launch, ExitCode, Timeout, MalformedOutput, Coverage };

    AdapterError(Cause cause, const std::string& adapter_id, const std::string& msg)
        : Error(ErrorKind::Adapter, "adapter \"" + adapter_id + "\": " + msg),
          cause_(cause), adapter_id_(adapter_id) {}

    Cause cause() const noexcept { return cause_; }
    const std::string& adapter_id() const noexcept { return adapter_id_; }

private:
    Cause cause_;
    std::string adapter_id_;
};

} // namespace mvlabel

#endif
