#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cpdp/error.hpp"
#include "cpdp/metrics.hpp"

namespace {

using namespace cpdp;
using namespace cpdp::metrics;
using predict::PredictionCloud;

PredictionCloud cloud_from(const std::vector<Vec3>& points, std::vector<double> weights = {}) {
  PredictionCloud c;
  c.joints = {"wrist"};
  c.positions.resize(3, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) c.positions.col(static_cast<Eigen::Index>(i)) = points[i];
  if (weights.empty()) weights.assign(points.size(), 1.0 / static_cast<double>(points.size()));
  c.weights = Eigen::Map<Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  return c;
}

PredictionCloud uniform_cube(double side, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, side);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(u(gen), u(gen), u(gen));
  return cloud_from(pts);
}

TEST(Mpjpe, HandComputedCase) {
  // Two steps, two joints; residual norms 1, 2, 3 and 4 mm.
  const PositionTrack truth = {{Vec3(0, 0, 0), Vec3(1, 1, 1)}, {Vec3(0, 0, 0), Vec3(0, 0, 0)}};
  const PositionTrack pred = {{Vec3(0.001, 0, 0), Vec3(1, 1.002, 1)},
                              {Vec3(0, 0, -0.003), Vec3(0, 0.004, 0)}};
  EXPECT_NEAR(mpjpe(truth, pred), 2.5, 1e-12);
}

TEST(Mpjpe, ZeroIffResidualsVanish) {
  const PositionTrack t = {{Vec3(0.1, 0.2, 0.3)}, {Vec3(-1, 0, 2)}};
  EXPECT_EQ(mpjpe(t, t), 0.0);
  auto p = t;
  p[1][0].x() += 1e-9;
  EXPECT_GT(mpjpe(t, p), 0.0);
}

TEST(Mpjpe, ShapeMismatchIsRejected) {
  const PositionTrack a = {{Vec3::Zero(), Vec3::Zero()}};
  const PositionTrack b = {{Vec3::Zero()}};
  EXPECT_THROW(mpjpe(a, b), Error);
  EXPECT_THROW(mpjpe(a, {}), Error);
}

TEST(MpjpeProperty, ConstantOffsetGivesItsNorm) {
  std::mt19937_64 gen(61);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 offset(n(gen), n(gen), n(gen));
    PositionTrack t(5, std::vector<Vec3>(3)), p = t;
    for (std::size_t s = 0; s < 5; ++s) {
      for (std::size_t j = 0; j < 3; ++j) {
        t[s][j] = Vec3(n(gen), n(gen), n(gen));
        p[s][j] = t[s][j] + offset;
      }
    }
    EXPECT_NEAR(mpjpe(t, p), 1000.0 * offset.norm(), 1e-9);
    // Shifting truth and prediction together leaves the error unchanged.
    auto t2 = t, p2 = p;
    const Vec3 shift(n(gen), n(gen), n(gen));
    for (auto& step : t2) for (auto& v : step) v += shift;
    for (auto& step : p2) for (auto& v : step) v += shift;
    EXPECT_NEAR(mpjpe(t2, p2), mpjpe(t, p), 1e-9);
  }
}

TEST(Nll, UniformUnitCubeIsZero) {
  const auto c = uniform_cube(1.0, 1000000, 1);
  std::vector<Vec3> truth = {Vec3(0.5, 0.5, 0.5), Vec3(0.3, 0.6, 0.4), Vec3(0.7, 0.25, 0.55)};
  std::vector<PredictionCloud> clouds(truth.size(), c);
  EXPECT_NEAR(nll(truth, clouds, 0, 10), 0.0, 0.05);
}

TEST(Nll, ShrunkCubeIsMinusLogEight) {
  const auto c = uniform_cube(0.5, 1000000, 2);
  std::vector<Vec3> truth = {Vec3(0.25, 0.25, 0.25), Vec3(0.15, 0.3, 0.2), Vec3(0.35, 0.12, 0.28)};
  std::vector<PredictionCloud> clouds(truth.size(), c);
  EXPECT_NEAR(nll(truth, clouds, 0, 10), -std::log(8.0), 0.05);
}

TEST(Nll, FarTruthHitsTheFloor) {
  const auto c = uniform_cube(1.0, 1000, 3);
  EXPECT_NEAR(nll({Vec3(50, 50, 50)}, {c}, 0), -std::log(1e-12), 1e-9);
  EXPECT_NEAR(nll({Vec3(50, 50, 50)}, {c}, 0), 27.63, 0.01);
  EXPECT_EQ(voxel_density(c, 0, Vec3(-3, 0.5, 0.5)), kDensityFloor);
}

TEST(Nll, PointCloudUsesMinimumPadding) {
  const auto c = cloud_from({Vec3(0.1, 0.2, 0.3), Vec3(0.1, 0.2, 0.3)});
  // Degenerate box: every axis padded by kMinPadding on both sides.
  const double side = 2 * kMinPadding;
  const double voxel = std::pow(side / static_cast<double>(kDefaultGridRes), 3);
  EXPECT_NEAR(voxel_density(c, 0, Vec3(0.1, 0.2, 0.3)), 1.0 / voxel, 1e-6 / voxel);
}

TEST(Nll, RejectsBadInput) {
  const auto c = uniform_cube(1.0, 100, 4);
  EXPECT_THROW(voxel_density(c, 0, Vec3::Zero(), 3), Error);
  EXPECT_THROW(nll({Vec3::Zero(), Vec3::Zero()}, {c}, 0), Error);
  EXPECT_THROW(voxel_density(c, 1, Vec3::Zero()), Error);
}

TEST(NllProperty, MovingWeightIntoTruthVoxelLowersNll) {
  // Two clusters far apart; the truth sits in the first.
  std::vector<Vec3> pts;
  for (int i = 0; i < 100; ++i) pts.emplace_back(0.01 * (i % 10), 0.01 * (i / 10), 0.0);
  for (int i = 0; i < 100; ++i) pts.emplace_back(1.0 + 0.01 * (i % 10), 1.0 + 0.01 * (i / 10), 1.0);
  const Vec3 truth(0.0, 0.0, 0.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double share : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    std::vector<double> w(200);
    for (int i = 0; i < 100; ++i) w[static_cast<std::size_t>(i)] = share / 100.0;
    for (int i = 100; i < 200; ++i) w[static_cast<std::size_t>(i)] = (1.0 - share) / 100.0;
    const double v = nll({truth}, {cloud_from(pts, w)}, 0);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(NllProperty, GridRefinementIsStable) {
  std::mt19937_64 gen(71);
  std::normal_distribution<double> n(0.0, 0.1);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<Vec3> pts(1000000);
    for (auto& p : pts) p = Vec3(n(gen), n(gen), n(gen));
    const auto c = cloud_from(pts);
    const Vec3 truth(0.02 * trial, -0.03, 0.05);
    const double coarse = nll({truth}, {c}, 0, 20);
    const double fine = nll({truth}, {c}, 0, 40);
    EXPECT_LT(std::abs(fine - coarse), 0.1 * std::abs(coarse)) << coarse << " vs " << fine;
  }
}

TEST(Summary, MeanAndStandardError) {
  const auto s = summarize({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std_error, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  EXPECT_EQ(summarize({7}).std_error, 0.0);
  EXPECT_THROW(summarize({}), Error);
}

TEST(Report, CsvLayout) {
  EvaluationReport r;
  r.mode = "constr";
  r.mpjpe_mm = {76.0, 5.0};
  r.nll = {-1.25, 0.5};
  r.n_windows = 12;
  r.per_action["screw"] = {{70.0, 4.0}, {-2.0, 0.25}, 6};
  r.nll_per_window = {{-1.0, -1.5}};
  const auto csv = format_report_csv({r});
  EXPECT_EQ(csv,
            "mode,action,mpjpe_mm,mpjpe_stderr,nll_mean,nll_stderr,n_windows\n"
            "constr,all,76.000000,5.000000,-1.250000,0.500000,12\n"
            "constr,screw,70.000000,4.000000,-2.000000,0.250000,6\n");
  const auto w = format_window_nll_csv({r}, {"screw", "lift"});
  EXPECT_EQ(w, "mode,repetition,window,action,nll\nconstr,0,0,screw,-1.000000\nconstr,0,1,lift,-1.500000\n");
}

}  // namespace
