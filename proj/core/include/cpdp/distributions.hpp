#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "cpdp/rng.hpp"

namespace cpdp::dist {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

double norm_pdf(double x);
double norm_cdf(double x);
// Throws InvalidArgument unless 0 < p < 1.
double norm_cdf_inv(double p);

// Normal(mu, sigma^2) restricted to [lb, ub]; bounds may be infinite.
struct TruncatedNormalSpec {
  double mu = 0.0;
  double sigma = 1.0;
  double lb = -kInf;
  double ub = kInf;
};

// Validated truncated normal with the normalising constants precomputed.
//
// When the interval lies entirely above the mean the computation is carried
// out on the mirrored interval, so that tail probabilities are taken from the
// lower tail where they keep full relative precision.
class TruncatedNormal {
 public:
  explicit TruncatedNormal(const TruncatedNormalSpec& spec);

  const TruncatedNormalSpec& spec() const { return spec_; }
  double mass() const { return mass_; }

  double pdf(double x) const;
  // -inf outside [lb, ub].
  double log_pdf(double x) const;
  double cdf(double x) const;
  double mean() const;
  double variance() const;
  // Inverse-CDF draw; always within [lb, ub].
  double sample(Rng& rng) const;

 private:
  TruncatedNormalSpec spec_;
  bool mirrored_ = false;
  double lo_ = 0.0;  // standardised bounds in the working (possibly mirrored) frame
  double hi_ = 0.0;
  double cdf_lo_ = 0.0;
  double mass_ = 0.0;
  double log_norm_ = 0.0;  // log(sigma * mass * sqrt(2 pi))
};

std::vector<double> tn_sample(const TruncatedNormalSpec& spec, std::size_t n, std::uint64_t seed);
double tn_pdf(const TruncatedNormalSpec& spec, double x);
double tn_mean(const TruncatedNormalSpec& spec);

}  // namespace cpdp::dist
