#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cpdp/dataio.hpp"
#include "cpdp/distributions.hpp"
#include "cpdp/gp_regression.hpp"
#include "cpdp/ik_solver.hpp"
#include "cpdp/kinematics.hpp"
#include "cpdp/scene.hpp"

namespace cpdp::predict {

using dist::TruncatedNormalSpec;
using kinematics::JointAngleState;
using kinematics::KinematicChain;

// The three comparison modes: GP on task-space coordinates, GP on joint
// angles without constraints, and GP on joint angles with kinematic bounds and
// scene rejection.
enum class Mode { kTaskSpaceGp, kJointAngleGp, kConstrained };

std::string_view mode_label(Mode mode);  // "xyz", "ja", "constr"
Mode parse_mode(std::string_view text);

enum class RejectionScope { kAllJoints, kEndJointOnly };

struct PredictionConfig {
  double observed_window = 0.2;  // s
  double horizon = 0.5;          // s
  double dt = 0.1;               // s per predicted step
  std::size_t mc_samples = 10000;
  Mode mode = Mode::kConstrained;
  RejectionScope rejection = RejectionScope::kAllJoints;
  std::uint64_t seed = 0;
  bool keep_rejected = false;

  std::size_t steps() const;
  void validate() const;
};

struct AngleBounds {
  double lb = 0.0;
  double ub = 0.0;
  bool clamped = false;  // theta_prev was outside the static bounds
};

// Static bounds intersected with the reachable band theta_prev +/- vel_ub * dt.
AngleBounds compute_bounds(double theta_prev, double static_lb, double static_ub, double vel_ub,
                           double dt);

struct StepSpecs {
  std::vector<TruncatedNormalSpec> specs;
  std::size_t clamped = 0;
};

// One-step GP posterior per angle turned into a truncated normal. With
// truncate == false the bounds are left infinite.
StepSpecs predict_step(const std::vector<gp::GpModel>& models,
                       const std::vector<std::vector<double>>& windows,
                       const KinematicChain& chain, double dt, bool truncate = true);

// Weighted Monte-Carlo representation of one predicted step. Storage is
// column-per-sample: angles is p_n x n, positions holds n * joints.size()
// columns with sample s, joint j at column s * joints.size() + j.
struct PredictionCloud {
  double t = 0.0;
  std::vector<std::string> joints;
  Eigen::MatrixXd angles;
  Eigen::Matrix3Xd positions;
  Eigen::VectorXd weights;  // normalised, sums to 1
  std::size_t rejected_count = 0;
  double normalization = 0.0;  // sum of accepted raw weights
  bool degraded = false;       // copied from an earlier step after total rejection

  // Only filled when requested.
  Eigen::MatrixXd rejected_angles;
  Eigen::Matrix3Xd rejected_positions;

  std::size_t size() const { return static_cast<std::size_t>(weights.size()); }
  Vec3 position(std::size_t sample, std::size_t joint) const {
    return positions.col(static_cast<Eigen::Index>(sample * joints.size() + joint));
  }
  std::size_t joint_index(const std::string& name) const;
  Vec3 mean_position(std::size_t joint) const;
};

struct TransportOptions {
  bool apply_scene = true;
  RejectionScope scope = RejectionScope::kAllJoints;
  bool keep_rejected = false;
  // Joint whose Jacobian pseudo-determinant enters the weights; empty selects
  // the chain's end joint.
  std::string density_joint;
};

// Draws n angle vectors from the per-angle truncated normals, maps them
// through FK, weights each by prod_i pdf_i / max(pdet(J), floor), rejects
// samples violating the scene and normalises the survivors.
// Throws EmptyCloudError if nothing survives.
PredictionCloud transport_and_filter(const std::vector<TruncatedNormalSpec>& specs,
                                     const KinematicChain& chain,
                                     const scene::SceneConstraints& scene, double t,
                                     std::size_t n_samples, std::uint64_t seed,
                                     const TransportOptions& options = {});

// Per-angle GPs plus, for task-space mode, three GPs (x, y, z) per joint.
struct ModelSet {
  std::vector<gp::GpModel> angles;
  std::map<std::string, std::vector<gp::GpModel>> xyz;

  std::size_t lag_order() const;
};

struct PredictionResult {
  Mode mode = Mode::kConstrained;
  std::vector<PredictionCloud> clouds;
  std::vector<JointPositions> mean_trajectory;
  std::vector<std::vector<TruncatedNormalSpec>> specs;
  std::vector<JointAngleState> observed_angles;
  std::size_t degraded_steps = 0;
  std::size_t clamped_bounds = 0;
};

// Full pipeline on an observed position sequence. Frames are resampled onto a
// grid of spacing dt ending at the last observation; angle modes run IK on the
// last lag_order frames.
PredictionResult predict_horizon(const dataio::ObservedSequence& obs, const ModelSet& models,
                                 const KinematicChain& chain,
                                 const scene::SceneConstraints& scene,
                                 const PredictionConfig& config, const ik::PsoConfig& ik_config);

// Angle-space modes given already solved observation angles (uniform dt).
PredictionResult predict_from_angles(const std::vector<JointAngleState>& observed,
                                     const ModelSet& models, const KinematicChain& chain,
                                     const scene::SceneConstraints& scene,
                                     const PredictionConfig& config);

// Task-space mode given uniformly spaced observed positions.
PredictionResult predict_task_space(const std::vector<PoseFrame>& observed,
                                    const ModelSet& models, const KinematicChain& chain,
                                    const PredictionConfig& config);

// CSV: step,t,sample_id,theta_1..theta_pn,joint,x,y,z,weight,accepted
std::string format_clouds_csv(const PredictionResult& result, std::size_t dof);
// CSV: step,t,joint,x,y,z
std::string format_mean_trajectory_csv(const PredictionResult& result);

}  // namespace cpdp::predict
