#pragma once

#include <cstdint>
#include <random>

namespace twostage {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t kDefaultSeed = 20200917;

// Independent stream for (seed, stream id). Replicate r of a Monte Carlo run
// always draws from make_stream(seed, r), whatever thread executes it.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

}  // namespace twostage
