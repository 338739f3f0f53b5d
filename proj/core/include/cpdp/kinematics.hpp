#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cpdp/types.hpp"

namespace cpdp::kinematics {

using HomogeneousTransform = Eigen::Matrix4d;

// One Denavit-Hartenberg link. A link without a joint_index is fixed; its
// rotation about z is theta_offset alone.
struct DhLink {
  double theta_offset = 0.0;
  double d = 0.0;
  double a = 0.0;
  double alpha = 0.0;
  std::optional<std::size_t> joint_index;
};

struct JointAngleState {
  Eigen::VectorXd angles;
  double timestamp = 0.0;
};

enum class JacobianMethod { kAnalytic, kCentralDifference };

// Immutable DH chain with per-angle static and velocity bounds.
//
// named_joints maps a joint name to a frame index k: the joint sits at the
// origin of the frame reached after composing the first k links (k = 0 is the
// base frame).
class KinematicChain {
 public:
  KinematicChain(std::vector<DhLink> links, Eigen::VectorXd angle_lb,
                 Eigen::VectorXd angle_ub, Eigen::VectorXd vel_ub,
                 std::map<std::string, std::size_t> named_joints);

  // 4-DOF arm: three intersecting shoulder angles, one elbow flexion,
  // upper arm 0.30 m, forearm 0.25 m. Base frame has z up; the arm hangs
  // along -z at the all-zero pose.
  static KinematicChain default_arm();

  const std::vector<DhLink>& links() const { return links_; }
  std::size_t dof() const { return dof_; }
  const Eigen::VectorXd& angle_lb() const { return angle_lb_; }
  const Eigen::VectorXd& angle_ub() const { return angle_ub_; }
  const Eigen::VectorXd& vel_ub() const { return vel_ub_; }
  const std::map<std::string, std::size_t>& named_joints() const { return named_joints_; }

  // Joint names ordered by frame index (proximal first).
  const std::vector<std::string>& joint_names() const { return ordered_names_; }
  std::size_t frame_of(const std::string& joint) const;
  std::size_t position_index(const std::string& joint) const;
  // Most distal named joint; the density of a prediction is taken there.
  const std::string& end_joint() const { return ordered_names_.back(); }

  Eigen::VectorXd clamp(const Eigen::VectorXd& angles) const;
  bool within_bounds(const Eigen::VectorXd& angles, double tol = 0.0) const;
  // Canonical rest pose: the zero vector clamped into the static bounds.
  Eigen::VectorXd rest_pose() const { return clamp(Eigen::VectorXd::Zero(dof_)); }

  KinematicChain with_vel_ub(Eigen::VectorXd vel_ub) const;
  KinematicChain with_angle_bounds(Eigen::VectorXd lb, Eigen::VectorXd ub) const;

 private:
  std::vector<DhLink> links_;
  std::size_t dof_ = 0;
  Eigen::VectorXd angle_lb_;
  Eigen::VectorXd angle_ub_;
  Eigen::VectorXd vel_ub_;
  std::map<std::string, std::size_t> named_joints_;
  std::vector<std::string> ordered_names_;
};

// Rot_z(theta) * Trans_z(d) * Trans_x(a) * Rot_x(alpha).
HomogeneousTransform dh_transform(double theta, double d, double a, double alpha);

bool is_rigid_transform(const HomogeneousTransform& t, double tol = 1e-9);

// Cumulative base->frame transforms; element k is the frame after k links.
std::vector<HomogeneousTransform> frame_transforms(const KinematicChain& chain,
                                                   const Eigen::VectorXd& angles);
// Same, reusing the caller's buffer.
void frame_transforms(const KinematicChain& chain, const Eigen::VectorXd& angles,
                      std::vector<HomogeneousTransform>& frames);

JointPositions forward_kinematics(const KinematicChain& chain, const JointAngleState& state);

// Positions of chain.joint_names() in order, without map allocation.
void joint_positions(const KinematicChain& chain, const Eigen::VectorXd& angles,
                     std::vector<Vec3>& out);

// 3 x dof matrix of d(position of joint)/d(angle).
Eigen::MatrixXd jacobian(const KinematicChain& chain, const JointAngleState& state,
                         const std::string& joint,
                         JacobianMethod method = JacobianMethod::kAnalytic);

// Analytic Jacobian from already computed frames (hot path of the predictor).
void jacobian_from_frames(const KinematicChain& chain,
                          const std::vector<HomogeneousTransform>& frames,
                          std::size_t frame_index, Eigen::Matrix<double, 3, Eigen::Dynamic>& out);

// sqrt(det(J J^T)) for a 3 x n Jacobian, n >= 3 (product of the singular
// values); zero up to rounding when J is rank deficient.
double pseudo_det(const Eigen::Ref<const Eigen::MatrixXd>& jac);

// Lower clamp applied when the pseudo-determinant is used as a divisor.
inline constexpr double kPseudoDetFloor = 1e-9;

// Chain file: { links: [{theta_offset, d, a, alpha, joint_index|null}],
//               angle_lb: [], angle_ub: [], vel_ub: [], named_joints: {name: frame} }
KinematicChain parse_chain(const std::string& json_text);
KinematicChain load_chain(const std::filesystem::path& path);
std::string chain_to_json(const KinematicChain& chain);

}  // namespace cpdp::kinematics
