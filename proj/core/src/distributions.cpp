#include "cpdp/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cpdp/error.hpp"

namespace cpdp::dist {

namespace {

constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
constexpr double kSqrt2Pi = 2.50662827463100050241576528481;
constexpr double kMinMass = 1e-300;

// Acklam's rational approximation, lower half only (p <= 0.5).
double acklam_lower(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549671010739305e+00,
                                 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Inverse for p <= 0.5 with one Halley step against the erfc-based CDF.
double inv_lower(double p) {
  double x = acklam_lower(p);
  const double e = norm_cdf(x) - p;
  const double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

}  // namespace

double norm_pdf(double x) {
  if (std::isinf(x)) return 0.0;
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

double norm_cdf_inv(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw_invalid("norm_cdf_inv requires p in (0, 1), got " + std::to_string(p));
  }
  if (p <= 0.5) return inv_lower(p);
  return -inv_lower(1.0 - p);
}

TruncatedNormal::TruncatedNormal(const TruncatedNormalSpec& spec) : spec_(spec) {
  if (!std::isfinite(spec.mu) || !std::isfinite(spec.sigma) || !(spec.sigma > 0.0)) {
    throw_invalid("truncated normal needs finite mu and sigma > 0");
  }
  if (std::isnan(spec.lb) || std::isnan(spec.ub) || !(spec.lb < spec.ub)) {
    throw_invalid("truncated normal needs lb < ub");
  }
  double alpha = (spec.lb - spec.mu) / spec.sigma;
  double beta = (spec.ub - spec.mu) / spec.sigma;
  mirrored_ = alpha > 0.0;
  if (mirrored_) {
    std::swap(alpha, beta);
    alpha = -alpha;
    beta = -beta;
  }
  lo_ = alpha;
  hi_ = beta;
  cdf_lo_ = norm_cdf(lo_);
  mass_ = norm_cdf(hi_) - cdf_lo_;
  if (!(mass_ > kMinMass)) {
    throw Error(ErrorCode::kDegenerateTruncation,
                "truncation interval carries no probability mass (mu=" + std::to_string(spec.mu) +
                    ", sigma=" + std::to_string(spec.sigma) + ")");
  }
  log_norm_ = std::log(spec_.sigma * mass_) + 0.5 * std::log(2.0 * std::numbers::pi);
}

double TruncatedNormal::pdf(double x) const {
  if (!(x >= spec_.lb && x <= spec_.ub)) return 0.0;
  return norm_pdf((x - spec_.mu) / spec_.sigma) / (spec_.sigma * mass_);
}

double TruncatedNormal::log_pdf(double x) const {
  if (!(x >= spec_.lb && x <= spec_.ub)) return -std::numeric_limits<double>::infinity();
  const double z = (x - spec_.mu) / spec_.sigma;
  return -0.5 * z * z - log_norm_;
}

double TruncatedNormal::cdf(double x) const {
  if (x <= spec_.lb) return 0.0;
  if (x >= spec_.ub) return 1.0;
  const double z = (x - spec_.mu) / spec_.sigma;
  if (!mirrored_) return (norm_cdf(z) - cdf_lo_) / mass_;
  return (norm_cdf(hi_) - norm_cdf(-z)) / mass_;
}

double TruncatedNormal::mean() const {
  const double shift = (norm_pdf(lo_) - norm_pdf(hi_)) / mass_;
  return spec_.mu + spec_.sigma * (mirrored_ ? -shift : shift);
}

double TruncatedNormal::variance() const {
  auto xphi = [](double z) { return std::isinf(z) ? 0.0 : z * norm_pdf(z); };
  const double shift = (norm_pdf(lo_) - norm_pdf(hi_)) / mass_;
  const double v = 1.0 + (xphi(lo_) - xphi(hi_)) / mass_ - shift * shift;
  return spec_.sigma * spec_.sigma * std::max(v, 0.0);
}

double TruncatedNormal::sample(Rng& rng) const {
  const double p = std::clamp(cdf_lo_ + rng.uniform() * mass_,
                              std::numeric_limits<double>::min(), 1.0 - 0x1.0p-53);
  double z = std::clamp(norm_cdf_inv(p), lo_, hi_);
  if (mirrored_) z = -z;
  return std::clamp(spec_.mu + spec_.sigma * z, spec_.lb, spec_.ub);
}

std::vector<double> tn_sample(const TruncatedNormalSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw_invalid("tn_sample needs n >= 1");
  const TruncatedNormal tn(spec);
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& x : out) x = tn.sample(rng);
  return out;
}

double tn_pdf(const TruncatedNormalSpec& spec, double x) { return TruncatedNormal(spec).pdf(x); }

double tn_mean(const TruncatedNormalSpec& spec) { return TruncatedNormal(spec).mean(); }

}  // namespace cpdp::dist
