#pragma once

#include <cstdint>
#include <string>

#include "genadapt/tensor.hpp"

namespace genadapt {

// splitmix64 stream. Fully specified here so results can be reproduced
// outside this codebase:
//   state += 0x9E3779B97F4A7C15
//   z = state; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   output = z ^ (z >> 31)
// uniform() maps the top 53 bits to (0,1): ((u64 >> 11) + 0.5) * 2^-53.
// normal() draws two uniforms u1, u2 and returns
//   sqrt(-2 ln u1) * cos(2 pi u2)
// with no cached second variate, so each call consumes exactly two draws.
// derive(tag) forks an independent substream by hashing the tag (FNV-1a)
// into the current state; the parent stream is not advanced.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal();

  Rng derive(const std::string& tag) const {
    std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a over the tag bytes
    for (unsigned char c : tag) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    return Rng(state_ ^ h);
  }

  Tensor normal_tensor(std::vector<std::size_t> shape, double stddev = 1.0);

 private:
  std::uint64_t state_;
};

}  // namespace genadapt
