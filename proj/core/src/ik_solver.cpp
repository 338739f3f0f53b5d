#include "cpdp/ik_solver.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "cpdp/error.hpp"
#include "cpdp/rng.hpp"

namespace cpdp::ik {

using kinematics::KinematicChain;

void PsoConfig::validate() const {
  if (swarm_size < 2) throw_invalid("PSO swarm_size must be >= 2");
  if (!(tolerance > 0.0)) throw_invalid("PSO tolerance must be > 0");
  if (!std::isfinite(inertia) || !std::isfinite(cognitive) || !std::isfinite(social)) {
    throw_invalid("PSO coefficients must be finite");
  }
}

namespace {

// Cold solves: progress below this fraction of the current best cost counts
// toward a stall, so a swarm crawling along a wrong basin gets restarted.
// Warm-started solves keep refining until progress drops below kStallAbsolute.
constexpr double kStallFraction = 1e-3;
constexpr double kStallAbsolute = 1e-12;

struct Target {
  std::size_t frame;
  Vec3 position;
  double weight;
};

class Cost {
 public:
  Cost(const KinematicChain& chain, const IkProblem& problem) : chain_(chain) {
    if (problem.targets.empty()) throw_invalid("IK problem needs at least one target");
    for (const auto& [name, pos] : problem.targets) {
      if (!pos.allFinite()) throw_invalid("IK target '" + name + "' is not finite");
      double w = 1.0;
      if (auto it = problem.weights.find(name); it != problem.weights.end()) w = it->second;
      if (!(w >= 0.0)) throw_invalid("IK weight for '" + name + "' must be >= 0");
      targets_.push_back({chain.frame_of(name), pos, w});
    }
  }

  double operator()(const Eigen::VectorXd& theta) const {
    const auto frames = kinematics::frame_transforms(chain_, theta);
    double cost = 0.0;
    for (const auto& t : targets_) {
      cost += t.weight * (frames[t.frame].topRightCorner<3, 1>() - t.position).squaredNorm();
    }
    return cost;
  }

 private:
  const KinematicChain& chain_;
  std::vector<Target> targets_;
};

}  // namespace

IkSolution solve_ik(const KinematicChain& chain, const IkProblem& problem,
                    const PsoConfig& config) {
  config.validate();
  const Cost cost(chain, problem);
  const auto n = static_cast<Eigen::Index>(chain.dof());
  const Eigen::VectorXd& lb = chain.angle_lb();
  const Eigen::VectorXd& ub = chain.angle_ub();
  const Eigen::VectorXd span = ub - lb;
  const Eigen::VectorXd vmax = 0.5 * span;
  const double tol2 = config.tolerance * config.tolerance;

  Rng rng(config.seed);
  const std::size_t m = config.swarm_size;
  std::vector<Eigen::VectorXd> x(m, Eigen::VectorXd(n)), v(m, Eigen::VectorXd(n));
  auto scatter = [&](std::size_t p) {
    for (Eigen::Index d = 0; d < n; ++d) {
      x[p][d] = rng.uniform(lb[d], ub[d]);
      v[p][d] = rng.uniform(-0.1, 0.1) * span[d];
    }
  };
  for (std::size_t p = 0; p < m; ++p) scatter(p);
  if (problem.warm_start) {
    if (problem.warm_start->size() != n) throw_invalid("warm_start length != p_n");
    x[0] = chain.clamp(*problem.warm_start);
  } else {
    x[0] = chain.rest_pose();
  }
  v[0].setZero();

  std::vector<Eigen::VectorXd> best_x = x;
  std::vector<double> best_f(m);
  std::size_t g = 0;
  for (std::size_t p = 0; p < m; ++p) {
    best_f[p] = cost(x[p]);
    if (best_f[p] < best_f[g]) g = p;
  }

  IkSolution sol;
  // Restarts launch a fresh swarm, so the answer is tracked outside it.
  Eigen::VectorXd overall_x = best_x[g];
  double overall_f = best_f[g];
  double last_improvement_cost = best_f[g];
  std::size_t last_improvement_iter = 0;
  std::size_t restarts_used = 0;
  const double stall_fraction = problem.warm_start ? 0.0 : kStallFraction;
  std::size_t it = 0;
  while (overall_f >= tol2 && it < config.iterations) {
    ++it;
    for (std::size_t p = 0; p < m; ++p) {
      for (Eigen::Index d = 0; d < n; ++d) {
        const double r1 = rng.uniform(), r2 = rng.uniform();
        double vel = config.inertia * v[p][d] + config.cognitive * r1 * (best_x[p][d] - x[p][d]) +
                     config.social * r2 * (best_x[g][d] - x[p][d]);
        vel = std::clamp(vel, -vmax[d], vmax[d]);
        double pos = x[p][d] + vel;
        if (pos < lb[d]) {
          pos = lb[d];
          vel = 0.0;
        } else if (pos > ub[d]) {
          pos = ub[d];
          vel = 0.0;
        }
        x[p][d] = pos;
        v[p][d] = vel;
      }
      const double f = cost(x[p]);
      if (f < best_f[p]) {
        best_f[p] = f;
        best_x[p] = x[p];
      }
    }
    for (std::size_t p = 0; p < m; ++p) {
      if (best_f[p] < best_f[g]) g = p;
    }
    if (best_f[g] < overall_f) {
      overall_f = best_f[g];
      overall_x = best_x[g];
    }
    sol.best_cost_history.push_back(overall_f);
    if (last_improvement_cost - best_f[g] > std::max(stall_fraction * last_improvement_cost, kStallAbsolute)) {
      last_improvement_cost = best_f[g];
      last_improvement_iter = it;
    } else if (config.stall_iterations > 0 && it - last_improvement_iter >= config.stall_iterations) {
      // A warm start already sits in the right basin; a fresh swarm would only
      // trade it for an equivalent configuration and break frame-to-frame coherence.
      if (problem.warm_start || restarts_used == config.restarts) break;
      ++restarts_used;
      for (std::size_t p = 0; p < m; ++p) {
        scatter(p);
        best_x[p] = x[p];
        best_f[p] = cost(x[p]);
      }
      g = static_cast<std::size_t>(std::min_element(best_f.begin(), best_f.end()) - best_f.begin());
      last_improvement_cost = best_f[g];
      last_improvement_iter = it;
    }
  }

  sol.state.angles = overall_x;
  sol.residual = std::sqrt(overall_f);
  sol.iterations = it;
  return sol;
}

namespace {

IkProblem frame_problem(const KinematicChain& chain, const PoseFrame& frame) {
  IkProblem problem;
  for (const auto& [name, pos] : frame.joints) {
    if (!chain.named_joints().count(name)) continue;
    if (chain.frame_of(name) == 0) continue;
    problem.targets[name] = pos;
  }
  return problem;
}

}  // namespace

std::vector<IkSolution> solve_trajectory(const std::vector<PoseFrame>& frames,
                                         const KinematicChain& chain, const PsoConfig& config) {
  if (frames.empty()) throw_invalid("solve_trajectory needs at least one frame");
  std::vector<IkSolution> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    IkProblem problem = frame_problem(chain, frames[i]);
    if (!out.empty()) problem.warm_start = out.back().state.angles;
    PsoConfig cfg = config;
    cfg.seed = derive_seed(config.seed, i);
    IkSolution sol = solve_ik(chain, problem, cfg);
    sol.state.timestamp = frames[i].t;
    out.push_back(std::move(sol));
  }
  return out;
}

std::vector<kinematics::JointAngleState> states_of(const std::vector<IkSolution>& solutions) {
  std::vector<kinematics::JointAngleState> out;
  out.reserve(solutions.size());
  for (const auto& s : solutions) out.push_back(s.state);
  return out;
}

std::vector<IkSolution> solve_batch(const std::vector<PoseFrame>& frames,
                                    const KinematicChain& chain, const PsoConfig& config,
                                    std::size_t threads) {
  if (frames.empty()) throw_invalid("solve_batch needs at least one frame");
  config.validate();
  std::vector<IkSolution> out(frames.size());
  std::vector<std::exception_ptr> errors(frames.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < frames.size(); i += stride) {
      try {
        PsoConfig cfg = config;
        cfg.seed = derive_seed(config.seed, i);
        out[i] = solve_ik(chain, frame_problem(chain, frames[i]), cfg);
        out[i].state.timestamp = frames[i].t;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, frames.size());
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace cpdp::ik
