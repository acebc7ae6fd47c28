#pragma once

#include <cstdint>
#include <random>

namespace jamlab {

// splitmix64; used to derive independent sub-seeds from a base seed.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = mix64(base);
    s = mix64(s ^ (a + 0x1000000001ULL));
    s = mix64(s ^ (b + 0x2000000002ULL));
    s = mix64(s ^ (c + 0x3000000003ULL));
    return s;
}

// All stochastic state in the library flows through this generator so that
// (seed -> sequence) is fixed on a given build.
using Rng = std::mt19937_64;

inline double draw_normal(Rng& rng) {
    static thread_local std::normal_distribution<double> dist(0.0, 1.0);
    dist.reset();
    return dist(rng);
}

}  // namespace jamlab
