#pragma once

#include <cstdint>
#include <random>

#include "pare/tensor.hpp"

namespace pare {

// Deterministic RNG with explicit stream derivation. Training derives one
// stream per (seed, purpose, iteration) so a resumed run draws exactly the
// same values as an uninterrupted one without serializing generator state.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // splitmix64-style mixing for deriving child stream seeds.
  static uint64_t mix(uint64_t a, uint64_t b);
  static uint64_t mix(uint64_t a, uint64_t b, uint64_t c) { return mix(mix(a, b), c); }

  uint64_t next_u64() { return gen_(); }

  double uniform01();                       // [0, 1)
  double uniform(double lo, double hi);     // [lo, hi)
  double normal();                          // standard normal, Box-Muller
  double normal(double mean, double sd) { return mean + sd * normal(); }
  int64_t uniform_int(int64_t lo, int64_t hi);  // [lo, hi)

 private:
  std::mt19937_64 gen_;
};

// Stream tags (arbitrary distinct constants).
namespace rng_tag {
inline constexpr uint64_t kParams = 0x70617261'6d730001ull;
inline constexpr uint64_t kBank = 0x62616e6b'00000002ull;
inline constexpr uint64_t kIter = 0x69746572'00000003ull;
inline constexpr uint64_t kData = 0x64617461'00000004ull;
inline constexpr uint64_t kSplit = 0x73706c69'74000005ull;
inline constexpr uint64_t kKmeans = 0x6b6d6561'6e730006ull;
}  // namespace rng_tag

void fill_normal(Tensor& t, Rng& rng, double sd, double mean = 0.0);
void fill_uniform(Tensor& t, Rng& rng, double lo, double hi);

}  // namespace pare
