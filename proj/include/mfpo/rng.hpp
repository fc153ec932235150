#ifndef MFPO_RNG_HPP
#define MFPO_RNG_HPP

#include "core.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mfpo {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of an independent stream identified by a master seed and an integer key tuple.
/// The result does not depend on the order in which streams are created.
inline std::uint64_t stream_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(master);
    for (auto k : keys) {
        h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    }
    return h;
}

inline Rng make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
    return Rng(stream_seed(master, keys));
}

// Stream tags, so that different consumers of one master seed never collide.
namespace stream_tag {
inline constexpr std::uint64_t hidden_kernel = 1;
inline constexpr std::uint64_t obs_kernel = 2;
inline constexpr std::uint64_t initial_law = 3;
inline constexpr std::uint64_t lloyd = 4;
inline constexpr std::uint64_t codebook = 5;
inline constexpr std::uint64_t path = 6;
inline constexpr std::uint64_t pilot = 7;
inline constexpr std::uint64_t bootstrap = 8;
} // namespace stream_tag

inline Vec standard_normal(Rng& rng, Eigen::Index dim) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Vec v(dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
        v[k] = dist(rng);
    }
    return v;
}

} // namespace mfpo

#endif
