#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

Mat4 identity() {
  Mat4 m{};
  for (int i = 0; i < 4; ++i) m[i][i] = 1.0;
  return m;
}

Mat4 multiply(const Mat4& x, const Mat4& y) {
  Mat4 out{};
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += x[i][k] * y[k][j];
      out[i][j] = s;
    }
  }
  return out;
}

Mat4 dh(double theta, double d, double a, double alpha) {
  // Rot_z(theta) Trans_z(d) Trans_x(a) Rot_x(alpha), built as a product of
  // elementary transforms rather than the closed form.
  Mat4 rz = identity(), tz = identity(), tx = identity(), rx = identity();
  rz[0][0] = std::cos(theta);
  rz[0][1] = -std::sin(theta);
  rz[1][0] = std::sin(theta);
  rz[1][1] = std::cos(theta);
  tz[2][3] = d;
  tx[0][3] = a;
  rx[1][1] = std::cos(alpha);
  rx[1][2] = -std::sin(alpha);
  rx[2][1] = std::sin(alpha);
  rx[2][2] = std::cos(alpha);
  return multiply(multiply(rz, tz), multiply(tx, rx));
}

std::vector<Point> frame_origins(const std::vector<Link>& links, const std::vector<double>& q) {
  std::vector<Point> out;
  Mat4 t = identity();
  out.push_back({t[0][3], t[1][3], t[2][3]});
  for (const auto& l : links) {
    const double theta = l.theta_offset + (l.joint ? q.at(*l.joint) : 0.0);
    t = multiply(t, dh(theta, l.d, l.a, l.alpha));
    out.push_back({t[0][3], t[1][3], t[2][3]});
  }
  return out;
}

std::vector<std::vector<double>> central_difference_jacobian(const std::vector<Link>& links,
                                                             const std::vector<double>& q,
                                                             std::size_t frame, double h) {
  std::vector<std::vector<double>> jac(3, std::vector<double>(q.size()));
  for (std::size_t c = 0; c < q.size(); ++c) {
    auto qp = q, qm = q;
    qp[c] += h;
    qm[c] -= h;
    const Point p = frame_origins(links, qp).at(frame);
    const Point m = frame_origins(links, qm).at(frame);
    for (int r = 0; r < 3; ++r) jac[r][c] = (p[r] - m[r]) / (2.0 * h);
  }
  return jac;
}

double pseudo_det_via_gram(const std::vector<std::vector<double>>& jac) {
  double g[3][3];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < jac[0].size(); ++k) s += jac[i][k] * jac[j][k];
      g[i][j] = s;
    }
  }
  const double det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1]) -
                     g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0]) +
                     g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
  return std::sqrt(std::max(det, 0.0));
}

std::vector<std::vector<double>> cholesky(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (std::size_t j = 0; j < n; ++j) {
    double s = a[j][j];
    for (std::size_t k = 0; k < j; ++k) s -= a[j][k] * a[j][k];
    if (!(s > 0.0)) throw std::runtime_error("oracle cholesky: matrix not positive definite");
    a[j][j] = std::sqrt(s);
    for (std::size_t i = j + 1; i < n; ++i) {
      double t = a[i][j];
      for (std::size_t k = 0; k < j; ++k) t -= a[i][k] * a[j][k];
      a[i][j] = t / a[j][j];
    }
    for (std::size_t k = j + 1; k < n; ++k) a[j][k] = 0.0;
  }
  return a;
}

std::vector<double> forward_substitute(const std::vector<std::vector<double>>& l,
                                       const std::vector<double>& b) {
  std::vector<double> x(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i][k] * x[k];
    x[i] = s / l[i][i];
  }
  return x;
}

std::vector<double> back_substitute_transpose(const std::vector<std::vector<double>>& l,
                                              const std::vector<double>& b) {
  const std::size_t n = b.size();
  std::vector<double> x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l[k][ii] * x[k];
    x[ii] = s / l[ii][ii];
  }
  return x;
}

namespace {

double kernel(const ExactGp& gp, const std::vector<double>& a, const std::vector<double>& b) {
  double r2 = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double u = (a[d] - b[d]) / gp.lengthscales[d];
    r2 += u * u;
  }
  return gp.signal_var * std::exp(-0.5 * r2);
}

}  // namespace

std::pair<double, double> ExactGp::predict(const std::vector<double>& x) const {
  const std::size_t n = inputs.size();
  std::vector<std::vector<double>> k(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) k[i][j] = kernel(*this, inputs[i], inputs[j]);
    k[i][i] += noise_var;
  }
  const auto l = cholesky(k);
  std::vector<double> centred(n), ks(n);
  for (std::size_t i = 0; i < n; ++i) {
    centred[i] = outputs[i] - mean_fn;
    ks[i] = kernel(*this, inputs[i], x);
  }
  const auto alpha = back_substitute_transpose(l, forward_substitute(l, centred));
  const auto v = forward_substitute(l, ks);
  double mean = mean_fn, vv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean += ks[i] * alpha[i];
    vv += v[i] * v[i];
  }
  return {mean, signal_var - vv + noise_var};
}

double simpson(const std::function<double(double)>& f, double a, double b, std::size_t n) {
  if (n % 2 != 0) ++n;
  const double h = (b - a) / static_cast<double>(n);
  double s = f(a) + f(b);
  for (std::size_t i = 1; i < n; ++i) {
    s += f(a + h * static_cast<double>(i)) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return s * h / 3.0;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double truncated_normal_cdf(double x, double mu, double sigma, double lb, double ub) {
  if (x <= lb) return 0.0;
  if (x >= ub) return 1.0;
  const double za = (lb - mu) / sigma, zb = (ub - mu) / sigma, zx = (x - mu) / sigma;
  if (za > 0.0) {
    // Upper-tail survival keeps precision when the interval is far above the mean.
    const auto q = [](double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); };
    return (q(za) - q(zx)) / (q(za) - q(zb));
  }
  const double a = normal_cdf(za);
  const double b = normal_cdf(zb);
  return (normal_cdf(zx) - a) / (b - a);
}

double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace oracle
