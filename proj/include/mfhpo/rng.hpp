#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mfhpo {

// splitmix64; used to derive independent streams from a base seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seeded random source with portable distributions: the mt19937_64 output
// sequence is pinned by the standard and all variates are derived from raw
// bits here, so identical seeds give identical draws on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer on [0, n).
    std::int64_t uniform_int(std::int64_t n) {
        auto v = static_cast<std::int64_t>(uniform() * static_cast<double>(n));
        return v >= n ? n - 1 : v;
    }

    // Standard normal via Box-Muller (no cached spare, keeps replay trivial).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    Rng fork(std::uint64_t stream) { return Rng(mix_seed(engine_(), stream)); }

private:
    std::mt19937_64 engine_;
};

}  // namespace mfhpo
