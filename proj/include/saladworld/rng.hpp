#pragma once

#include <cstdint>
#include <random>

namespace saladworld {

// Deterministic random source. Every stochastic choice in a run (weight init,
// epsilon-greedy draws, replay sampling, dropout gating) flows through one Rng
// seeded from the run seed, so equal (config, seed) pairs replay bit for bit.
// Distribution helpers are hand-rolled because the std::*_distribution
// implementations are not portable across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t x = gen_();
      if (x >= threshold) return x % n;
    }
  }

  // Inclusive integer range.
  int range(int lo, int hi) {
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace saladworld
