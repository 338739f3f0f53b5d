#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Core>

#include "cpdp/gp_regression.hpp"
#include "cpdp/kinematics.hpp"
#include "cpdp/predictor.hpp"
#include "oracles.hpp"

namespace fixtures {

inline std::vector<oracle::Link> oracle_links(const cpdp::kinematics::KinematicChain& chain) {
  std::vector<oracle::Link> out;
  for (const auto& l : chain.links()) {
    out.push_back({l.theta_offset, l.d, l.a, l.alpha, l.joint_index});
  }
  return out;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

// Uniform angles strictly inside the static bounds.
inline Eigen::VectorXd random_angles(const cpdp::kinematics::KinematicChain& chain,
                                     std::mt19937_64& gen, double margin = 0.0) {
  Eigen::VectorXd q(static_cast<Eigen::Index>(chain.dof()));
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    std::uniform_real_distribution<double> u(chain.angle_lb()[i] + margin,
                                             chain.angle_ub()[i] - margin);
    q[i] = u(gen);
  }
  return q;
}

// Fixed-hyperparameter lag-k GP trained on a few sinusoids around `center`.
// Cheap to build; used where the tests need a plausible model, not a fitted one.
inline cpdp::gp::GpModel sinusoid_model(double center, double amplitude, std::size_t lag,
                                        double dt = 0.1) {
  std::vector<std::vector<double>> seqs;
  for (int k = 0; k < 4; ++k) {
    std::vector<double> s;
    const double f = 0.25 + 0.05 * k;
    for (int i = 0; i < 40; ++i) {
      s.push_back(center + amplitude * std::sin(2.0 * M_PI * f * i * dt + 0.7 * k));
    }
    seqs.push_back(std::move(s));
  }
  const auto data = cpdp::gp::build_lagged(seqs, lag);
  cpdp::gp::GpHyperparams hp;
  hp.lengthscales = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(lag), amplitude);
  hp.signal_var = amplitude * amplitude;
  hp.noise_var = 1e-4 * amplitude * amplitude;
  const auto inducing = cpdp::gp::select_inducing(data.inputs, 20, 3);
  return cpdp::gp::GpModel(hp, inducing, data.inputs, data.outputs, data.outputs.mean());
}

inline cpdp::predict::ModelSet arm_models(std::size_t lag = 3) {
  cpdp::predict::ModelSet set;
  set.angles.push_back(sinusoid_model(0.25, 0.1, lag));
  set.angles.push_back(sinusoid_model(0.15, 0.1, lag));
  set.angles.push_back(sinusoid_model(0.0, 0.6, lag));
  set.angles.push_back(sinusoid_model(1.2, 0.4, lag));
  return set;
}

// Observed angle history consistent with arm_models().
inline std::vector<cpdp::kinematics::JointAngleState> arm_history(std::size_t lag,
                                                                  double dt = 0.1) {
  std::vector<cpdp::kinematics::JointAngleState> out;
  for (std::size_t i = 0; i < lag; ++i) {
    const double t = static_cast<double>(i) * dt;
    Eigen::VectorXd q(4);
    q << 0.25 + 0.1 * std::sin(1.6 * t), 0.15 + 0.1 * std::sin(1.9 * t + 0.7),
        0.6 * std::sin(2.0 * t + 1.4), 1.2 + 0.4 * std::sin(1.7 * t + 2.1);
    out.push_back({q, t});
  }
  return out;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cpdp_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
