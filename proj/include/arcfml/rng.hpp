// rng.hpp - seeded random streams
//
// Every stochastic component draws from a stream derived from a master seed
// plus a small tuple of stream labels (node id, record index, ...), so results
// never depend on evaluation order or thread count.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace arcfml {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Combine a seed with stream labels into an independent-looking sub-seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> labels) noexcept {
    std::uint64_t h = splitmix64(seed);
    for (auto l : labels) h = splitmix64(h ^ splitmix64(l + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> labels = {}) {
    return Rng(derive_seed(seed, labels));
}

// Stream labels used across modules.
namespace stream {
inline constexpr std::uint64_t noise = 1;
inline constexpr std::uint64_t tap = 2;
inline constexpr std::uint64_t record = 3;
inline constexpr std::uint64_t schedule = 4;
inline constexpr std::uint64_t decode = 5;
inline constexpr std::uint64_t init = 6;
inline constexpr std::uint64_t shuffle = 7;
inline constexpr std::uint64_t frame = 8;
}  // namespace stream

}  // namespace arcfml
