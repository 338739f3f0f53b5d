#include "cpdp/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include <Eigen/Dense>

#include "cpdp/error.hpp"
#include "json_util.hpp"

namespace cpdp::kinematics {

namespace {

constexpr double kPi = std::numbers::pi;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw_invalid(std::string("non-finite ") + what);
}

}  // namespace

KinematicChain::KinematicChain(std::vector<DhLink> links, Eigen::VectorXd angle_lb,
                               Eigen::VectorXd angle_ub, Eigen::VectorXd vel_ub,
                               std::map<std::string, std::size_t> named_joints)
    : links_(std::move(links)),
      angle_lb_(std::move(angle_lb)),
      angle_ub_(std::move(angle_ub)),
      vel_ub_(std::move(vel_ub)),
      named_joints_(std::move(named_joints)) {
  std::set<std::size_t> seen;
  for (const auto& link : links_) {
    require_finite(link.theta_offset, "theta_offset");
    require_finite(link.d, "d");
    require_finite(link.a, "a");
    require_finite(link.alpha, "alpha");
    if (link.a < 0.0) throw_invalid("DH link length a must be >= 0");
    if (link.alpha < -kPi - 1e-12 || link.alpha > kPi + 1e-12) {
      throw_invalid("DH twist alpha must lie in [-pi, pi]");
    }
    if (link.joint_index) {
      if (!seen.insert(*link.joint_index).second) {
        throw_invalid("joint_index " + std::to_string(*link.joint_index) + " used twice");
      }
    }
  }
  dof_ = seen.size();
  for (std::size_t i = 0; i < dof_; ++i) {
    if (!seen.count(i)) throw_invalid("joint indices must be 0..p_n-1 without gaps");
  }
  if (static_cast<std::size_t>(angle_lb_.size()) != dof_ ||
      static_cast<std::size_t>(angle_ub_.size()) != dof_ ||
      static_cast<std::size_t>(vel_ub_.size()) != dof_) {
    throw_invalid("bound vectors must have one entry per free angle");
  }
  for (std::size_t i = 0; i < dof_; ++i) {
    if (!(angle_lb_[i] < angle_ub_[i])) {
      throw_invalid("angle_lb must be < angle_ub for angle " + std::to_string(i));
    }
    if (!(vel_ub_[i] > 0.0)) throw_invalid("vel_ub must be > 0 for angle " + std::to_string(i));
  }
  if (named_joints_.empty()) throw_invalid("chain needs at least one named joint");
  std::vector<std::pair<std::size_t, std::string>> order;
  for (const auto& [name, frame] : named_joints_) {
    if (frame > links_.size()) throw_invalid("named joint '" + name + "' beyond chain end");
    order.emplace_back(frame, name);
  }
  std::sort(order.begin(), order.end());
  for (auto& [frame, name] : order) ordered_names_.push_back(name);
}

KinematicChain KinematicChain::default_arm() {
  const double h = kPi / 2.0;
  std::vector<DhLink> links = {
      {0.0, 0.0, 0.0, -h, std::nullopt},  // base: joint-0 axis along lateral y
      {h, 0.0, 0.0, -h, 0},               // shoulder flexion
      {h, 0.0, 0.0, h, 1},                // shoulder abduction
      {h, 0.30, 0.0, -h, 2},            // humeral rotation, upper arm
      {-h, 0.0, 0.25, 0.0, 3},            // elbow flexion, forearm
  };
  Eigen::VectorXd lb(4), ub(4), vel(4);
  lb << -h, -h, -h, 0.0;
  ub << kPi, h, h, 2.6;
  vel.setConstant(3.0);
  return KinematicChain(std::move(links), lb, ub, vel,
                        {{"shoulder", 0}, {"elbow", 4}, {"wrist", 5}});
}

std::size_t KinematicChain::frame_of(const std::string& joint) const {
  auto it = named_joints_.find(joint);
  if (it == named_joints_.end()) throw_invalid("unknown joint '" + joint + "'");
  return it->second;
}

std::size_t KinematicChain::position_index(const std::string& joint) const {
  auto it = std::find(ordered_names_.begin(), ordered_names_.end(), joint);
  if (it == ordered_names_.end()) throw_invalid("unknown joint '" + joint + "'");
  return static_cast<std::size_t>(it - ordered_names_.begin());
}

Eigen::VectorXd KinematicChain::clamp(const Eigen::VectorXd& angles) const {
  return angles.cwiseMax(angle_lb_).cwiseMin(angle_ub_);
}

bool KinematicChain::within_bounds(const Eigen::VectorXd& angles, double tol) const {
  if (static_cast<std::size_t>(angles.size()) != dof_) return false;
  for (std::size_t i = 0; i < dof_; ++i) {
    if (angles[i] < angle_lb_[i] - tol || angles[i] > angle_ub_[i] + tol) return false;
  }
  return true;
}

KinematicChain KinematicChain::with_vel_ub(Eigen::VectorXd vel_ub) const {
  return KinematicChain(links_, angle_lb_, angle_ub_, std::move(vel_ub), named_joints_);
}

KinematicChain KinematicChain::with_angle_bounds(Eigen::VectorXd lb, Eigen::VectorXd ub) const {
  return KinematicChain(links_, std::move(lb), std::move(ub), vel_ub_, named_joints_);
}

HomogeneousTransform dh_transform(double theta, double d, double a, double alpha) {
  require_finite(theta, "theta");
  require_finite(d, "d");
  require_finite(a, "a");
  require_finite(alpha, "alpha");
  const double ct = std::cos(theta), st = std::sin(theta);
  const double ca = std::cos(alpha), sa = std::sin(alpha);
  HomogeneousTransform t;
  t << ct, -st * ca, st * sa, a * ct,
       st, ct * ca, -ct * sa, a * st,
       0.0, sa, ca, d,
       0.0, 0.0, 0.0, 1.0;
  return t;
}

bool is_rigid_transform(const HomogeneousTransform& t, double tol) {
  if (std::abs(t(3, 0)) > tol || std::abs(t(3, 1)) > tol || std::abs(t(3, 2)) > tol ||
      std::abs(t(3, 3) - 1.0) > tol) {
    return false;
  }
  const Eigen::Matrix3d r = t.topLeftCorner<3, 3>();
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return ortho < tol && std::abs(r.determinant() - 1.0) < tol;
}

void frame_transforms(const KinematicChain& chain, const Eigen::VectorXd& angles,
                      std::vector<HomogeneousTransform>& frames) {
  if (static_cast<std::size_t>(angles.size()) != chain.dof()) {
    throw_invalid("angle vector length " + std::to_string(angles.size()) + " != p_n " +
                  std::to_string(chain.dof()));
  }
  const auto& links = chain.links();
  frames.resize(links.size() + 1);
  frames[0].setIdentity();
  for (std::size_t i = 0; i < links.size(); ++i) {
    const auto& l = links[i];
    const double theta = l.theta_offset + (l.joint_index ? angles[*l.joint_index] : 0.0);
    frames[i + 1].noalias() = frames[i] * dh_transform(theta, l.d, l.a, l.alpha);
  }
}

std::vector<HomogeneousTransform> frame_transforms(const KinematicChain& chain,
                                                   const Eigen::VectorXd& angles) {
  std::vector<HomogeneousTransform> frames;
  frame_transforms(chain, angles, frames);
  return frames;
}

JointPositions forward_kinematics(const KinematicChain& chain, const JointAngleState& state) {
  const auto frames = frame_transforms(chain, state.angles);
  JointPositions out;
  for (const auto& [name, frame] : chain.named_joints()) {
    out[name] = frames[frame].topRightCorner<3, 1>();
  }
  return out;
}

void joint_positions(const KinematicChain& chain, const Eigen::VectorXd& angles,
                     std::vector<Vec3>& out) {
  const auto frames = frame_transforms(chain, angles);
  const auto& names = chain.joint_names();
  out.resize(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    out[i] = frames[chain.named_joints().at(names[i])].topRightCorner<3, 1>();
  }
}

void jacobian_from_frames(const KinematicChain& chain,
                          const std::vector<HomogeneousTransform>& frames,
                          std::size_t frame_index,
                          Eigen::Matrix<double, 3, Eigen::Dynamic>& out) {
  out.setZero(3, static_cast<Eigen::Index>(chain.dof()));
  const Vec3 p = frames[frame_index].topRightCorner<3, 1>();
  const auto& links = chain.links();
  for (std::size_t i = 0; i < frame_index && i < links.size(); ++i) {
    if (!links[i].joint_index) continue;
    // Link i rotates about the z axis of the frame preceding it.
    const Vec3 axis = frames[i].block<3, 1>(0, 2);
    const Vec3 origin = frames[i].topRightCorner<3, 1>();
    out.col(static_cast<Eigen::Index>(*links[i].joint_index)) = axis.cross(p - origin);
  }
}

Eigen::MatrixXd jacobian(const KinematicChain& chain, const JointAngleState& state,
                         const std::string& joint, JacobianMethod method) {
  const std::size_t frame = chain.frame_of(joint);
  if (method == JacobianMethod::kAnalytic) {
    Eigen::Matrix<double, 3, Eigen::Dynamic> j;
    jacobian_from_frames(chain, frame_transforms(chain, state.angles), frame, j);
    return j;
  }
  constexpr double kStep = 1e-6;
  Eigen::MatrixXd j(3, static_cast<Eigen::Index>(chain.dof()));
  Eigen::VectorXd theta = state.angles;
  for (Eigen::Index c = 0; c < j.cols(); ++c) {
    const double saved = theta[c];
    theta[c] = saved + kStep;
    const Vec3 plus = frame_transforms(chain, theta)[frame].topRightCorner<3, 1>();
    theta[c] = saved - kStep;
    const Vec3 minus = frame_transforms(chain, theta)[frame].topRightCorner<3, 1>();
    theta[c] = saved;
    j.col(c) = (plus - minus) / (2.0 * kStep);
  }
  return j;
}

double pseudo_det(const Eigen::Ref<const Eigen::MatrixXd>& jac) {
  if (jac.rows() != 3 || jac.cols() < 3) {
    throw Error(ErrorCode::kUnsupportedShape,
                "pseudo_det needs a 3 x n matrix with n >= 3, got " +
                    std::to_string(jac.rows()) + " x " + std::to_string(jac.cols()));
  }
  // Cauchy-Binet: det(J J^T) is the sum of squared 3x3 minors. Working with
  // the minors directly avoids squaring the condition number.
  const Eigen::Index n = jac.cols();
  double sum = 0.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const Vec3 ab = Vec3(jac.col(a)).cross(Vec3(jac.col(b)));
      for (Eigen::Index c = b + 1; c < n; ++c) {
        const double minor = ab.dot(Vec3(jac.col(c)));
        sum += minor * minor;
      }
    }
  }
  return std::sqrt(sum);
}

}  // namespace cpdp::kinematics

namespace cpdp::kinematics {

namespace {

using detail::json;

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

KinematicChain parse_chain(const std::string& json_text) {
  const json doc = detail::parse_json(json_text, "chain");
  std::vector<DhLink> links;
  for (const auto& l : detail::get_field<json>(doc, "links", "chain")) {
    DhLink link;
    link.theta_offset = l.value("theta_offset", 0.0);
    link.d = l.value("d", 0.0);
    link.a = l.value("a", 0.0);
    link.alpha = l.value("alpha", 0.0);
    if (l.contains("joint_index") && !l["joint_index"].is_null()) {
      link.joint_index = l["joint_index"].get<std::size_t>();
    }
    links.push_back(link);
  }
  return KinematicChain(
      std::move(links), to_vector(detail::get_field<std::vector<double>>(doc, "angle_lb", "chain")),
      to_vector(detail::get_field<std::vector<double>>(doc, "angle_ub", "chain")),
      to_vector(detail::get_field<std::vector<double>>(doc, "vel_ub", "chain")),
      detail::get_field<std::map<std::string, std::size_t>>(doc, "named_joints", "chain"));
}

KinematicChain load_chain(const std::filesystem::path& path) {
  return parse_chain(detail::read_text_file(path));
}

std::string chain_to_json(const KinematicChain& chain) {
  json doc;
  doc["links"] = json::array();
  for (const auto& l : chain.links()) {
    json j{{"theta_offset", l.theta_offset}, {"d", l.d}, {"a", l.a}, {"alpha", l.alpha}};
    j["joint_index"] = l.joint_index ? json(*l.joint_index) : json(nullptr);
    doc["links"].push_back(j);
  }
  doc["angle_lb"] = to_std(chain.angle_lb());
  doc["angle_ub"] = to_std(chain.angle_ub());
  doc["vel_ub"] = to_std(chain.vel_ub());
  doc["named_joints"] = chain.named_joints();
  return doc.dump(2);
}

}  // namespace cpdp::kinematics
