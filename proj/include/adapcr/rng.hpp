#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace adapcr::rng {

/// Stable 64-bit FNV-1a. Used for seed splitting and hash embeddings.
constexpr std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept {
    std::uint64_t h = basis;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a root seed and a label.
constexpr std::uint64_t derive(std::uint64_t seed, std::string_view label) noexcept {
    return splitmix64(seed ^ fnv1a64(label));
}

// std::mt19937_64 output is fixed by the standard; the distributions are not,
// so the helpers below are written out to stay identical across toolchains.
using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::string_view label) {
    return Engine(derive(seed, label));
}

/// Uniform integer in [0, n). n must be positive.
inline std::uint64_t uniform_index(Engine& engine, std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t draw = engine();
    while (draw >= limit) draw = engine();
    return draw % n;
}

/// Uniform double in [0, 1).
inline double uniform01(Engine& engine) {
    return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& engine, double lo, double hi) {
    return lo + (hi - lo) * uniform01(engine);
}

double normal(Engine& engine);

template <typename T>
void shuffle(std::vector<T>& values, Engine& engine) {
    for (std::size_t i = values.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(engine, i));
        std::swap(values[i - 1], values[j]);
    }
}

}  // namespace adapcr::rng
