#include "mvlabel/util.hpp"

#include "mvlabel/errors.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <unistd.h>

namespace mvlabel {

namespace {
std::atomic<LogLevel> g_level{LogLevel::Info};

const char* level_tag(LogLevel level) {
    switch (level) {
    case LogLevel::Error: return "error";
    case LogLevel::Warn: return "warn";
    case LogLevel::Info: return "info";
    case LogLevel::Debug: return "debug";
    }
    return "?";
}
} // namespace

void set_log_level(LogLevel level) { g_level.store(level); }
LogLevel log_level() { return g_level.load(); }

LogLevel parse_log_level(const std::string& name) {
    if (name == "error") return LogLevel::Error;
    if (name == "warn") return LogLevel::Warn;
    if (name == "info") return LogLevel::Info;
    if (name == "debug") return LogLevel::Debug;
    throw ConfigError("unknown log level \"" + name + "\" (expected error|warn|info|debug)");
}

void log(LogLevel level, const std::string& msg) {
    if (level > g_level.load()) return;
    std::cerr << "[" << level_tag(level) << "] " << msg << "\n";
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path.string());
    return out.str();
}

void atomic_write_file(const std::filesystem::path& path, std::string_view content) {
    static std::atomic<unsigned> counter{0};
    std::filesystem::path dir = path.parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    std::filesystem::path tmp = path;
    tmp += ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot create file: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("rename failed for " + path.string() + ": " + ec.message());
    }
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) {
    for (unsigned char c : bytes) {
        state ^= c;
        state *= 0x00000100000001b3ULL;
    }
    return state;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string digest_bytes(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

std::string digest_file(const std::filesystem::path& path) {
    return digest_bytes(read_file(path));
}

std::filesystem::path resolve_path(const std::string& path,
                                   const std::string& data_root,
                                   const std::filesystem::path& base_dir) {
    std::filesystem::path p(path);
    if (p.is_absolute()) return p;
    if (!data_root.empty()) return std::filesystem::path(data_root) / p;
    if (!base_dir.empty()) return base_dir / p;
    return p;
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

void require_safe_stem(const std::string& id, const std::string& what) {
    if (id.empty() || id.find('/') != std::string::npos || id.find('\\') != std::string::npos ||
        id.find("..") != std::string::npos || id[0] == '.')
        throw Error(ErrorKind::Data, what + " \"" + id + "\" is not usable as a file name");
}

} // namespace mvlabel
