#ifndef MVLABEL_UTIL_HPP
#define MVLABEL_UTIL_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mvlabel {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

void set_log_level(LogLevel level);
LogLevel log_level();
LogLevel parse_log_level(const std::string& name);

// Human-readable logging goes to stderr only; machine output owns stdout.
void log(LogLevel level, const std::string& msg);

std::string read_file(const std::filesystem::path& path);

// Writes via a sibling temp file plus rename so readers never observe a
// partial file.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

// FNV-1a 64-bit. Content addressing for caches and provenance records,
// not a cryptographic hash.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
std::string digest_bytes(std::string_view bytes);
std::string digest_file(const std::filesystem::path& path);

// Relative paths are prefixed by data_root when set, otherwise resolved
// against base_dir (typically the directory of the referencing file).
std::filesystem::path resolve_path(const std::string& path,
                                   const std::string& data_root,
                                   const std::filesystem::path& base_dir = {});

std::string env_or(const char* name, const std::string& fallback);

// Frame ids become raster file stems; refuse ids that would escape the
// output directory.
void require_safe_stem(const std::string& id, const std::string& what);

} // namespace mvlabel

#endif
