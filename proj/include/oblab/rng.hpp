#pragma once

// Counter-based normal generator (Philox4x32-10). A draw is a pure function of
// (seed, counter), so Monte Carlo work can be split across workers in any
// order and still reproduce bit-for-bit.

#include <array>
#include <cstdint>

namespace oblab::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

Counter philox4x32_10(Counter ctr, Key key);

inline Key key_from_seed(std::uint64_t seed) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

// Stream tags keep independent uses of one seed apart.
enum class Tag : std::uint32_t {
    noise = 1,
    ensemble_start = 2,
    ensemble_step = 3,
    sample = 4,
    probe = 5,
};

/// Uniform on the open interval (0, 1), 53 bits.
double uniform(std::uint64_t seed, Counter ctr);

/// Standard normal via Box-Muller (cosine branch) on one Philox block.
double normal(std::uint64_t seed, Counter ctr);

inline Counter counter(std::uint32_t a, std::uint32_t b, Tag tag, std::uint32_t stream = 0) {
    return {a, b, static_cast<std::uint32_t>(tag), stream};
}

/// Seed of the i-th Monte Carlo sample derived from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace oblab::rng
