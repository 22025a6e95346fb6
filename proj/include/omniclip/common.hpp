#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace omniclip {

// Shape or dimensionality violations (mismatched extents, bad axes).
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values produced by a primitive, zero-norm rows, NaN losses.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configuration values or inconsistent config/manifest combinations.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checkpoint / manifest / export file problems.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime  = 0x100000001b3ull;

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = kFnvOffset;
    for (unsigned char c : s) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

} // namespace omniclip
