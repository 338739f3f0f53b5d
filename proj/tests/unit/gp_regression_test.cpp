#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "cpdp/error.hpp"
#include "cpdp/gp_regression.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace {

using namespace cpdp::gp;

// 50 noisy samples of a smooth 1-D function.
struct OneDimProblem {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

OneDimProblem one_dim_problem(int n = 50, std::uint64_t seed = 1) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  OneDimProblem p{Eigen::MatrixXd(n, 1), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    const double xi = -3.0 + 6.0 * i / (n - 1);
    p.x(i, 0) = xi;
    p.y[i] = std::sin(xi) + 0.3 * xi + noise(gen);
  }
  return p;
}

oracle::ExactGp exact_for(const OneDimProblem& p, const GpHyperparams& hp, double mean_fn) {
  oracle::ExactGp gp;
  for (Eigen::Index i = 0; i < p.x.rows(); ++i) {
    gp.inputs.push_back({p.x(i, 0)});
    gp.outputs.push_back(p.y[i]);
  }
  gp.lengthscales = {hp.lengthscales[0]};
  gp.signal_var = hp.signal_var;
  gp.noise_var = hp.noise_var;
  gp.mean_fn = mean_fn;
  return gp;
}

TEST(Gp, KernelBasics) {
  GpHyperparams hp;
  hp.lengthscales = Eigen::Vector2d(0.5, 2.0);
  hp.signal_var = 1.7;
  const Eigen::RowVector2d a(0.1, -0.3), b(1.0, 0.4);
  EXPECT_DOUBLE_EQ(rbf(hp, a, a), 1.7);
  EXPECT_DOUBLE_EQ(rbf(hp, a, b), rbf(hp, b, a));
  const double expected = 1.7 * std::exp(-0.5 * (0.81 / 0.25 + 0.49 / 4.0));
  EXPECT_NEAR(rbf(hp, a, b), expected, 1e-15);
}

TEST(Gp, HyperparameterValidation) {
  GpHyperparams hp;
  hp.lengthscales = Eigen::VectorXd::Ones(2);
  EXPECT_NO_THROW(hp.validate());
  hp.noise_var = 0.0;
  EXPECT_THROW(hp.validate(), cpdp::Error);
  hp.noise_var = 0.1;
  hp.lengthscales[1] = -1.0;
  EXPECT_THROW(hp.validate(), cpdp::Error);
}

TEST(Gp, LagEmbeddingNeverCrossesSequences) {
  const std::vector<std::vector<double>> seqs = {{1, 2, 3, 4}, {10, 20}, {5, 6, 7}};
  const auto d = build_lagged(seqs, 2);
  ASSERT_EQ(d.rows(), 3u);
  EXPECT_EQ(d.skipped_sequences, 1u);
  EXPECT_EQ(d.inputs.row(0), Eigen::RowVector2d(1, 2));
  EXPECT_EQ(d.outputs[0], 3);
  EXPECT_EQ(d.inputs.row(1), Eigen::RowVector2d(2, 3));
  EXPECT_EQ(d.inputs.row(2), Eigen::RowVector2d(5, 6));
  EXPECT_EQ(d.outputs[2], 7);
  EXPECT_THROW(build_lagged({{1, 2}}, 2), cpdp::Error);
  EXPECT_THROW(build_lagged(seqs, 0), cpdp::Error);
}

TEST(Gp, SparseEqualsExactWhenInducingIsTrainingSet) {
  // Few enough points that the inducing covariance stays well conditioned under jitter.
  const auto p = one_dim_problem(20);
  GpHyperparams hp;
  hp.lengthscales = Eigen::VectorXd::Constant(1, 0.5);
  hp.signal_var = 1.3;
  hp.noise_var = 0.02;
  const double mean_fn = p.y.mean();
  const GpModel model(hp, p.x, p.x, p.y, mean_fn);
  const auto exact = exact_for(p, hp, mean_fn);
  for (int i = 0; i < 50; ++i) {
    const double xs = -3.5 + 7.0 * i / 49.0;
    const auto ours = model.posterior(std::vector<double>{xs});
    const auto [m, v] = exact.predict({xs});
    EXPECT_NEAR(ours.mean, m, 1e-6) << xs;
    EXPECT_NEAR(ours.variance, v, 1e-6) << xs;
  }
}

TEST(Gp, VarianceGrowsAwayFromData) {
  const auto p = one_dim_problem();
  FitOptions opt;
  opt.inducing = 10;
  opt.seed = 2;
  const auto model = fit(build_lagged({std::vector<double>(p.y.data(), p.y.data() + 50)}, 1), opt);
  // Along a ray leaving the data range the variance never decreases and ends
  // at prior signal + noise variance.
  double prev = 0.0;
  const double far_end = model.hyper().signal_var + model.hyper().noise_var;
  for (double x = 3.0; x < 60.0; x += 0.25) {
    const double v = model.posterior(std::vector<double>{x}).variance;
    EXPECT_GT(v, 0.0);
    EXPECT_GE(v, prev - 1e-12);
    prev = v;
  }
  EXPECT_NEAR(prev, far_end, 1e-9);
}

TEST(Gp, AnalyticGradientMatchesFiniteDifferences) {
  const auto p = one_dim_problem(30);
  const auto data = build_lagged({std::vector<double>(p.y.data(), p.y.data() + 30)}, 2);
  const Eigen::VectorXd y = (data.outputs.array() - data.outputs.mean()).matrix();
  GpHyperparams hp;
  hp.lengthscales = Eigen::Vector2d(0.7, 1.1);
  hp.signal_var = 0.9;
  hp.noise_var = 0.05;
  const Eigen::MatrixXd z = select_inducing(data.inputs, 6, 4);
  SpgpGradient g;
  spgp_log_likelihood(data.inputs, y, hp, z, kJitter, &g);

  const double h = 1e-6;
  auto ll = [&](const GpHyperparams& h2, const Eigen::MatrixXd& z2) {
    return spgp_log_likelihood(data.inputs, y, h2, z2);
  };
  for (int d = 0; d < 2; ++d) {
    auto up = hp, dn = hp;
    up.lengthscales[d] *= std::exp(h);
    dn.lengthscales[d] *= std::exp(-h);
    EXPECT_NEAR(g.log_lengthscales[d], (ll(up, z) - ll(dn, z)) / (2 * h), 1e-5);
  }
  {
    auto up = hp, dn = hp;
    up.signal_var *= std::exp(h);
    dn.signal_var *= std::exp(-h);
    EXPECT_NEAR(g.log_signal_var, (ll(up, z) - ll(dn, z)) / (2 * h), 1e-5);
  }
  {
    auto up = hp, dn = hp;
    up.noise_var *= std::exp(h);
    dn.noise_var *= std::exp(-h);
    EXPECT_NEAR(g.log_noise_var, (ll(up, z) - ll(dn, z)) / (2 * h), 1e-5);
  }
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      Eigen::MatrixXd up = z, dn = z;
      up(i, j) += h;
      dn(i, j) -= h;
      EXPECT_NEAR(g.inducing(i, j), (ll(hp, up) - ll(hp, dn)) / (2 * h), 1e-4);
    }
  }
}

TEST(Gp, FitImprovesLikelihoodAndIsDeterministic) {
  const auto p = one_dim_problem();
  const auto data = build_lagged({std::vector<double>(p.y.data(), p.y.data() + 50)}, 3);
  FitOptions opt;
  opt.inducing = 12;
  opt.seed = 7;
  FitReport r1, r2;
  const auto a = fit(data, opt, &r1);
  const auto b = fit(data, opt, &r2);
  EXPECT_GE(r1.final_log_likelihood, r1.initial_log_likelihood);
  EXPECT_LE(r1.iterations, opt.max_iterations);
  EXPECT_EQ(a.hyper().lengthscales, b.hyper().lengthscales);
  EXPECT_EQ(a.inducing(), b.inducing());
  EXPECT_EQ(a.hyper().noise_var, b.hyper().noise_var);
  EXPECT_NEAR(a.log_marginal_likelihood(), r1.final_log_likelihood, 1e-8);
  EXPECT_EQ(a.lag_order(), 3u);
}

TEST(Gp, FitRejectsBadInducingCounts) {
  const auto data = build_lagged({{1, 2, 3, 4, 5}}, 2);
  FitOptions opt;
  opt.inducing = 10;
  EXPECT_THROW(fit(data, opt), cpdp::Error);
  opt.inducing = 0;
  EXPECT_THROW(fit(data, opt), cpdp::Error);
}

TEST(Gp, ModelJsonRoundTrip) {
  const auto model = fixtures::sinusoid_model(0.3, 0.2, 3);
  const auto back = parse_model(model_to_json(model));
  EXPECT_EQ(back.hyper().lengthscales, model.hyper().lengthscales);
  EXPECT_EQ(back.hyper().signal_var, model.hyper().signal_var);
  EXPECT_EQ(back.inducing(), model.inducing());
  EXPECT_EQ(back.mean_fn(), model.mean_fn());
  EXPECT_EQ(back.checksum(), model.checksum());
  const std::vector<double> x = {0.25, 0.3, 0.35};
  EXPECT_EQ(back.posterior(x).mean, model.posterior(x).mean);
  EXPECT_EQ(back.posterior(x).variance, model.posterior(x).variance);
}

TEST(Gp, TamperedModelFileFailsChecksum) {
  const auto model = fixtures::sinusoid_model(0.3, 0.2, 2);
  auto text = model_to_json(model);
  const auto pos = text.find("\"checksum\"");
  ASSERT_NE(pos, std::string::npos);
  const auto q = text.find('"', text.find(':', pos) + 1);
  text[q + 1] = text[q + 1] == '0' ? '1' : '0';
  try {
    parse_model(text);
    FAIL() << "expected a checksum error";
  } catch (const cpdp::Error& e) {
    EXPECT_EQ(e.code(), cpdp::ErrorCode::kValidation);
  }
}

TEST(GpProperty, KernelMatrixIsPositiveSemidefinite) {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> ls(0.1, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd x(40, 3);
    for (auto& v : x.reshaped()) v = n(gen);
    GpHyperparams hp;
    hp.lengthscales = Eigen::Vector3d(ls(gen), ls(gen), ls(gen));
    hp.signal_var = ls(gen);
    const Eigen::MatrixXd k = kernel_matrix(hp, x, x);
    EXPECT_LT((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
    EXPECT_GT(eig.eigenvalues().minCoeff(), -1e-9);
  }
}

TEST(GpProperty, PosteriorVarianceIsPositive) {
  const auto model = fixtures::sinusoid_model(0.0, 0.6, 3);
  std::mt19937_64 gen(19);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> x = {u(gen), u(gen), u(gen)};
    EXPECT_GT(model.posterior(x).variance, 0.0);
  }
}

}  // namespace
