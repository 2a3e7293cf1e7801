#pragma once

#include <cstdint>
#include <random>

namespace rsdrl {

/// Independent random streams derived from one run seed.
enum class StreamId : std::uint32_t {
  EnvTransitions = 1,
  EnvRewards = 2,
  NetworkInit = 3,
  Exploration = 4,
  ReplaySampling = 5,
  LossSampling = 6,
  Evaluation = 7,
};

inline std::mt19937_64 make_stream(std::uint64_t seed, StreamId id, std::uint64_t sub = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(sub),
                    static_cast<std::uint32_t>(sub >> 32)};
  return std::mt19937_64(seq);
}

/// Seed for an auxiliary simulator (evaluation rollouts, Monte Carlo chunks).
inline std::uint64_t derive_seed(std::uint64_t seed, StreamId id, std::uint64_t sub) {
  auto rng = make_stream(seed, id, sub);
  return rng();
}

}  // namespace rsdrl
