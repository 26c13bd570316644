#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace collis {

// Per-point boolean mask, aligned with point index.
using Mask = std::vector<std::uint8_t>;

inline std::size_t mask_count(const Mask& m) {
    std::size_t n = 0;
    for (auto b : m) n += (b != 0);
    return n;
}

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration or invariant violation in user-supplied settings.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed or truncated files.
struct IoError : Error {
    using Error::Error;
};

// Data violating a contract at runtime (shape mismatch, NaN, bad label).
struct DataError : Error {
    using Error::Error;
};

}  // namespace collis
