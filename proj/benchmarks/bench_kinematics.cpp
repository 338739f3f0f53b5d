#include <random>

#include <benchmark/benchmark.h>

#include "cpdp/ik_solver.hpp"
#include "cpdp/kinematics.hpp"

namespace {

using namespace cpdp;
using kinematics::KinematicChain;

Eigen::VectorXd random_pose(const KinematicChain& arm, std::mt19937_64& gen) {
  Eigen::VectorXd q(static_cast<Eigen::Index>(arm.dof()));
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    q[i] = std::uniform_real_distribution<double>(arm.angle_lb()[i], arm.angle_ub()[i])(gen);
  }
  return q;
}

void BM_JointPositions(benchmark::State& state) {
  const auto arm = KinematicChain::default_arm();
  std::mt19937_64 gen(1);
  const auto q = random_pose(arm, gen);
  std::vector<Vec3> out;
  for (auto _ : state) {
    kinematics::joint_positions(arm, q, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_JointPositions);

void BM_Jacobian(benchmark::State& state) {
  const auto arm = KinematicChain::default_arm();
  const auto method = state.range(0) == 0 ? kinematics::JacobianMethod::kAnalytic
                                          : kinematics::JacobianMethod::kCentralDifference;
  std::mt19937_64 gen(2);
  const kinematics::JointAngleState s{random_pose(arm, gen), 0.0};
  for (auto _ : state) {
    auto j = kinematics::jacobian(arm, s, "wrist", method);
    benchmark::DoNotOptimize(j.data());
  }
  state.SetLabel(state.range(0) == 0 ? "analytic" : "central difference");
}
BENCHMARK(BM_Jacobian)->Arg(0)->Arg(1);

void BM_PseudoDet(benchmark::State& state) {
  const auto arm = KinematicChain::default_arm();
  std::mt19937_64 gen(3);
  const auto j = kinematics::jacobian(arm, {random_pose(arm, gen), 0.0}, "wrist");
  for (auto _ : state) benchmark::DoNotOptimize(kinematics::pseudo_det(j));
}
BENCHMARK(BM_PseudoDet);

void BM_SolveIk(benchmark::State& state) {
  const auto arm = KinematicChain::default_arm();
  std::mt19937_64 gen(4);
  const auto q = random_pose(arm, gen);
  const auto pos = kinematics::forward_kinematics(arm, {q, 0.0});
  ik::IkProblem problem;
  problem.targets["elbow"] = pos.at("elbow");
  problem.targets["wrist"] = pos.at("wrist");
  if (state.range(0) == 1) problem.warm_start = q;
  ik::PsoConfig cfg;
  for (auto _ : state) {
    auto sol = ik::solve_ik(arm, problem, cfg);
    benchmark::DoNotOptimize(sol.residual);
  }
  state.SetLabel(state.range(0) == 1 ? "warm start" : "cold");
}
BENCHMARK(BM_SolveIk)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

}  // namespace
