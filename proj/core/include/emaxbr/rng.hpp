#pragma once

#include <cstdint>

namespace emaxbr::rng {

// Counter-based generator: every draw is a pure function of its key, so
// results do not depend on which thread evaluates them or in what order.

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t a,
                                        std::uint64_t b) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ (stream * 0xd6e8feb86659fd93ULL));
    h = mix64(h ^ a);
    h = mix64(h ^ (b + 0x632be59bd9b4e019ULL));
    return h;
}

/// Uniform on [0, 1) with 53 random bits.
inline constexpr double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t a, std::uint64_t b) {
    return static_cast<double>(hash_key(seed, stream, a, b) >> 11) * 0x1.0p-53;
}

// Stream tags keep independent uses of one seed apart.
inline constexpr std::uint64_t kStreamSimulation = 1;
inline constexpr std::uint64_t kStreamBootstrap = 2;

}  // namespace emaxbr::rng
