#pragma once

#include <cstdint>
#include <random>

namespace bilevel_lb {

// Seeded generator with named sub-streams. Every stream is a deterministic
// function of (seed, stream id), so runs replay bit-exactly from the seed
// recorded in their trace.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  SplitRng split(std::uint64_t child) const {
    return SplitRng(seed_, stream_ * 0x9E3779B97F4A7C15ULL + child + 1);
  }

  std::uint64_t seed() const { return seed_; }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return p >= 1.0 ? true : uniform() < p; }

  std::uint64_t next() { return engine_(); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

}  // namespace bilevel_lb
