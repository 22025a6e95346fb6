#pragma once

#include <cmath>
#include <cstdint>

#include "omniclip/common.hpp"

namespace omniclip {

// Explicit-state pseudo-random generator (splitmix64). Every random draw in
// the project goes through this so results do not depend on the platform's
// <random> distributions.
struct SplitMix64 {
    std::uint64_t state = 0;

    SplitMix64() = default;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller from two fresh uniforms; no cached spare so the state is a
    // single u64 and checkpointing it is trivial.
    double normal() {
        double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::uint64_t below(std::uint64_t n) { return n ? next() % n : 0; }
};

// Stable per-name stream: identical tensors regardless of construction order.
inline SplitMix64 named_stream(std::uint64_t seed, const std::string& name) {
    return SplitMix64(seed ^ fnv1a64(name));
}

} // namespace omniclip
