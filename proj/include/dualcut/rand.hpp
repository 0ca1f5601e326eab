#pragma once

// Deterministic random utilities. std::mt19937_64 is fully specified by the
// standard; the distributions are not, so every draw here is built from raw
// engine output to keep results bit-identical across compilers.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dualcut {

// splitmix64 finalizer, used to derive independent seeds from (base, salts...).
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base) { return mix_seed(base); }

template <typename... Rest>
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt, Rest... rest) {
    return derive_seed(mix_seed(base ^ mix_seed(salt)), rest...);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n), rejection sampled (no modulo bias).
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return x % n;
}

// Standard normal via Box-Muller; stateless (draws two uniforms per call,
// discards the spare) so call sites stay order-independent.
inline double standard_normal(std::mt19937_64& rng) {
    double u = 1.0 - uniform01(rng);  // (0, 1], keeps log finite
    double v = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586 * v);
}

// Fisher-Yates with uniform_below; deterministic for a fixed engine state.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace dualcut
