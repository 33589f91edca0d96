#pragma once

#include <stdexcept>
#include <string>

namespace vitsem {

// Error categories map 1:1 onto CLI exit codes (see tools/).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input bytes: image files, tensor files. Carries the byte offset
// of the first offending position when known.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg, long long offset = -1)
        : std::runtime_error(offset >= 0 ? msg + " (at byte offset " + std::to_string(offset) + ")"
                                         : msg),
          byte_offset(offset) {}
    long long byte_offset;
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vitsem
