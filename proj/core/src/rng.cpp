#include "pare/rng.hpp"

#include <cmath>

namespace pare {

uint64_t Rng::mix(uint64_t a, uint64_t b) {
  // splitmix64 finalizer over the combined word
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double Rng::uniform01() {
  // 53 random bits into [0,1)
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

double Rng::normal() {
  // Box-Muller; consumes two draws, no cached state (keeps streams trivially
  // reproducible across resume boundaries).
  double u1 = uniform01();
  double u2 = uniform01();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (hi <= lo) return lo;
  uint64_t span = static_cast<uint64_t>(hi - lo);
  // modulo bias is negligible for span << 2^64 (all uses are small)
  return lo + static_cast<int64_t>(gen_() % span);
}

void fill_normal(Tensor& t, Rng& rng, double sd, double mean) {
  for (real& x : t.data()) x = static_cast<real>(rng.normal(mean, sd));
}

void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
  for (real& x : t.data()) x = static_cast<real>(rng.uniform(lo, hi));
}

}  // namespace pare
