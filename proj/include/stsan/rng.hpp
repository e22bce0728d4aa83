#pragma once

#include <cstdint>
#include <random>

namespace stsan {

// All stochastic components draw from seeded mt19937_64 streams so every
// command is reproducible under --seed.
using Rng = std::mt19937_64;

// splitmix64, used to derive independent stream seeds from (seed, tag) pairs
// without coupling the consumers to a shared generator state.
inline uint64_t mix_seed(uint64_t seed, uint64_t tag) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Rng make_rng(uint64_t seed, uint64_t tag = 0) { return Rng(mix_seed(seed, tag)); }

}  // namespace stsan
