#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace edgecast {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Order-sensitive seed derivation: h0 = splitmix64(a0), h_i = splitmix64(h_{i-1} ^ a_i).
/// Used for every derived stream (suite cells, ensemble members, forest trees).
constexpr std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) noexcept {
    std::uint64_t h = 0;
    bool first = true;
    for (auto p : parts) {
        h = first ? splitmix64(p) : splitmix64(h ^ p);
        first = false;
    }
    return h;
}

/// 64-bit FNV-1a, used to turn model names into stable identifiers.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Poisson(lambda) by sequential inversion of the CDF. Consumes exactly one draw.
/// Throws ValidationError for lambda < 0.
unsigned poisson_weight(Rng& rng, double lambda);

}  // namespace edgecast
