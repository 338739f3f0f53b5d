#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cpdp/kinematics.hpp"
#include "cpdp/types.hpp"

namespace cpdp::ik {

struct PsoConfig {
  std::size_t swarm_size = 40;
  std::size_t iterations = 150;
  double inertia = 0.7;
  double cognitive = 1.5;
  double social = 1.5;
  double tolerance = 1e-3;  // metres; the swarm stops once the residual drops below it
  // A stall is this many iterations without real progress of the swarm's best
  // cost (0.1% for cold solves, 1e-12 absolute with a warm start). A cold stall
  // launches a fresh swarm, keeping the best answer so far, until `restarts` are
  // used up; a warm-started solve ends at its first stall. Zero disables the check.
  std::size_t stall_iterations = 30;
  std::size_t restarts = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct IkProblem {
  JointPositions targets;
  std::optional<Eigen::VectorXd> warm_start;
  // Per-joint cost weights; joints not listed weigh 1.
  std::map<std::string, double> weights;
};

struct IkSolution {
  kinematics::JointAngleState state;
  double residual = 0.0;  // sqrt of the weighted squared position error
  std::size_t iterations = 0;
  std::vector<double> best_cost_history;  // global-best cost after each iteration
};

IkSolution solve_ik(const kinematics::KinematicChain& chain, const IkProblem& problem,
                    const PsoConfig& config);

// Sequential per-frame IK, warm-started from the previous frame's solution.
// Targets at the base frame are skipped since they carry no angle information.
std::vector<IkSolution> solve_trajectory(const std::vector<PoseFrame>& frames,
                                         const kinematics::KinematicChain& chain,
                                         const PsoConfig& config);

std::vector<kinematics::JointAngleState> states_of(const std::vector<IkSolution>& solutions);

// Independent per-frame solves with per-frame derived seeds and no warm start;
// runs on up to `threads` worker threads.
std::vector<IkSolution> solve_batch(const std::vector<PoseFrame>& frames,
                                    const kinematics::KinematicChain& chain,
                                    const PsoConfig& config, std::size_t threads);

}  // namespace cpdp::ik
