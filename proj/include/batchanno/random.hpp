#ifndef BATCHANNO_RANDOM_HPP
#define BATCHANNO_RANDOM_HPP

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

/**
 * @file random.hpp
 *
 * @brief Portable seeded randomness.
 *
 * `std::mt19937_64` is fully specified by the standard, but the standard
 * distributions and `std::shuffle` are not, so corpora built with them would
 * differ between standard libraries. Everything here sits directly on the raw
 * engine output to keep outputs byte-identical across platforms.
 */

namespace batchanno {

using Engine = std::mt19937_64;

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view text, std::uint64_t hash = 0xcbf29ce484222325ULL) {
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

/// splitmix64 finalizer, used to decorrelate derived seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    return mix64(seed ^ mix64(salt));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view salt) {
    return derive_seed(seed, fnv1a(salt));
}

/**
 * Uniform integer in `[0, bound)` by rejection sampling.
 * `bound` must be positive.
 */
inline std::uint64_t uniform_index(Engine& engine, std::uint64_t bound) {
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound + 1) % bound;
    while (true) {
        const std::uint64_t draw = engine();
        if (draw <= limit) {
            return draw % bound;
        }
    }
}

/// Uniform double in `[0, 1)` with 53 bits of resolution.
inline double uniform_unit(Engine& engine) {
    return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// Fisher-Yates shuffle.
template<typename T>
void shuffle(std::span<T> values, Engine& engine) {
    for (std::size_t i = values.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(engine, i));
        using std::swap;
        swap(values[i - 1], values[j]);
    }
}

} // namespace batchanno

#endif
