#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "plumeplace/errors.hpp"

namespace plumeplace {

/// splitmix64 step; used to derive independent child seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic seed derivation: children of (seed, a[, b]) are independent
/// streams, so parallel generation equals sequential generation.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t s = seed;
    std::uint64_t h = splitmix64(s);
    s ^= a + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h = splitmix64(s);
    s ^= b + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return splitmix64(s);
}

/// Seeded random stream. Transforms are written out explicitly so that a
/// (seed, config) pair reproduces artifacts byte-for-byte on any platform.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (single value; no cached state).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Nonnegative truncated normal by rejection. Requires mean >= 0 so the
    /// acceptance probability is at least 1/2.
    double truncated_normal(double mean, double sd) {
        for (int tries = 0; tries < 1 << 20; ++tries) {
            const double x = normal(mean, sd);
            if (x >= 0.0) return x;
        }
        throw NumericalError("truncated_normal: rejection sampling failed (mean << 0?)");
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace plumeplace
