#pragma once

#include <cstdint>
#include <random>

namespace protoicl {

/// Independent random streams derived from one run seed, so that e.g.
/// changing the pair sampler never shifts the shuffling sequence.
enum class RngStream : std::uint32_t {
  Init = 1,
  Shuffle = 2,
  Pairs = 3,
  Data = 4,
  DataTest = 5,
  ClassOrder = 6,
  Check = 7,
  DataTrain = 8,
};

[[nodiscard]] inline std::mt19937_64 make_rng(std::uint64_t seed, RngStream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

}  // namespace protoicl
