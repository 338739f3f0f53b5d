#include "cpdp/rng.hpp"

#include "cpdp/distributions.hpp"

namespace cpdp {

double Rng::normal() { return dist::norm_cdf_inv(uniform()); }

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace cpdp
