#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace xreid {

// Error taxonomy shared by the C++ core, the C API and the CLI.
// invalid_argument -> CLI exit 1, everything else -> exit 2.
enum class Errc {
    invalid_argument,
    io,
    state,    // missing upstream artifact, wrong mode, ...
    numeric,  // non-finite loss and friends
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    Errc code() const { return code_; }

private:
    Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& msg);

// FNV-1a over bytes; used for config hashing and seed derivation.
std::uint64_t fnv1a64(const void* data, std::size_t n);
std::uint64_t fnv1a64(const std::string& s);
std::string hex64(std::uint64_t v);

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

// Locale-independent numeric formatting (used everywhere determinism matters).
std::string format_double(double v);

bool file_exists(const std::string& path);
bool dir_exists(const std::string& path);
void make_dirs(const std::string& path);
std::string read_text_file(const std::string& path);
// write-temp-then-rename
void write_text_file_atomic(const std::string& path, const std::string& content);
void write_binary_file_atomic(const std::string& path, const void* data, std::size_t n);
std::vector<std::string> list_dir_sorted(const std::string& dir);
std::string path_join(const std::string& a, const std::string& b);
std::string basename_of(const std::string& path);

}  // namespace xreid
