// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace pfusion {

// splitmix64; used to derive independent seeds from (run seed, purpose, indices)
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Purpose tags for seed derivation. Every source of randomness in a run is a
// pure function of (seed, tag, a, b), so resuming at a task boundary replays
// the exact same streams.
enum class SeedTag : uint64_t {
    DatasetGen = 1,
    StreamSplit = 2,
    EncoderInit = 3,
    PromptInit = 4,
    BatchShuffle = 5,
    Gumbel = 6,
    Buffer = 7,
    FeatureSample = 8,
    GateInit = 9,
    ClassOrder = 10,
    KdeDirection = 11,
};

inline uint64_t derive_seed(uint64_t seed, SeedTag tag, uint64_t a = 0, uint64_t b = 0) {
    uint64_t h = splitmix64(seed ^ 0x7fe5c661a1ed7103ULL);
    h = splitmix64(h ^ static_cast<uint64_t>(tag));
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return h;
}

inline std::mt19937_64 make_rng(uint64_t seed, SeedTag tag, uint64_t a = 0, uint64_t b = 0) {
    return std::mt19937_64(derive_seed(seed, tag, a, b));
}

template <typename T>
T normal_draw(std::mt19937_64& rng, T mean = T(0), T stddev = T(1)) {
    std::normal_distribution<double> d(static_cast<double>(mean), static_cast<double>(stddev));
    return static_cast<T>(d(rng));
}

template <typename T>
T uniform_draw(std::mt19937_64& rng, T lo = T(0), T hi = T(1)) {
    std::uniform_real_distribution<double> d(static_cast<double>(lo), static_cast<double>(hi));
    return static_cast<T>(d(rng));
}

}  // namespace pfusion
