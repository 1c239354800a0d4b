#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stvsr {

// Error taxonomy shared by the library and the CLI exit-code contract:
// config/validation -> 2, I/O -> 3, numerical failure -> 4.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data; carries the byte offset where parsing failed.
struct ParseError : std::runtime_error {
  std::uint64_t offset;
  ParseError(const std::string& msg, std::uint64_t off)
      : std::runtime_error(msg + " (at byte " + std::to_string(off) + ")"),
        offset(off) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

inline constexpr const char* kToolVersion = "stvsr 0.1.0";

}  // namespace stvsr
