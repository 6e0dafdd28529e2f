#pragma once

#include <cstdint>
#include <random>

namespace distill {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent streams from a master seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
    return mix_seed(master ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(rng);
}

}  // namespace distill
