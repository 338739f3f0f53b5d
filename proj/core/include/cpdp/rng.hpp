#pragma once

#include <cstdint>
#include <random>

namespace cpdp {

// Seeded 64-bit stream. Conversions to reals are done here rather than with
// <random> distributions so that results are identical across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via the inverse CDF.
  double normal();

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer over (base, stream); used to derive independent
// per-step / per-repetition seeds from one user seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace cpdp
