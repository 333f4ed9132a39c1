#pragma once

#include <cmath>
#include <cstdint>

#include "dla/tensor.hpp"

namespace dla::numeric {

/// Counter-based deterministic generator (SplitMix64 stream). The state is a
/// plain 64-bit counter advanced by the golden-ratio increment, so identical
/// seeds give bitwise-identical sample streams on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; draws two uniforms per call so the
    /// stream position does not depend on cached leftovers.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 0x1.0p-60) u1 = 0x1.0p-60;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Uniform integer in [0, n).
    int below(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

    std::uint64_t state() const { return state_; }

  private:
    std::uint64_t state_;
};

inline void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
    for (double& v : t.data) v = rng.uniform(lo, hi);
}

inline void fill_normal(Tensor& t, Rng& rng, double stddev = 1.0) {
    for (double& v : t.data) v = stddev * rng.normal();
}

}  // namespace dla::numeric
