#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffrecon {

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input (bad magic number, unparseable config, ...).
struct FormatError : Error {
  using Error::Error;
};

/// Structurally valid input with inconsistent content (truncated payload,
/// buffer/manifest length mismatch, ...).
struct CorruptionError : Error {
  using Error::Error;
};

/// Invalid or inconsistent run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// --- hashing ------------------------------------------------------------

/// FNV-1a over a byte range. Used to derive per-sample RNG streams.
std::uint64_t fnv1a(const void* data, std::size_t n,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);

/// splitmix64 step; mixes one word into a seed. Chains give cheap,
/// well-distributed stream ids.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t word);

/// SHA-256 as lowercase hex. Used for artifact provenance in reports.
std::string sha256_hex(const void* data, std::size_t n);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::filesystem::path& path);

// --- filesystem ----------------------------------------------------------

std::vector<char> read_file_bytes(const std::filesystem::path& path);

/// Write-temp-then-rename so readers never observe partial files.
void atomic_write_file(const std::filesystem::path& path, const void* data,
                       std::size_t n);
void atomic_write_file(const std::filesystem::path& path,
                       const std::string& text);

// --- timing ----------------------------------------------------------------

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace diffrecon
