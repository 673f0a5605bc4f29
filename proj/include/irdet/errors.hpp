#pragma once

#include <stdexcept>
#include <string>

namespace irdet {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error("validation error: " + msg) {}
};

// Persistence failures are split so callers can tell a wrong file from a
// damaged one.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

struct VersionError : std::runtime_error {
    explicit VersionError(const std::string& msg) : std::runtime_error("version error: " + msg) {}
};

struct TruncatedFileError : std::runtime_error {
    explicit TruncatedFileError(const std::string& msg) : std::runtime_error("truncated file: " + msg) {}
};

struct ChecksumError : std::runtime_error {
    explicit ChecksumError(const std::string& msg) : std::runtime_error("checksum error: " + msg) {}
};

} // namespace irdet
