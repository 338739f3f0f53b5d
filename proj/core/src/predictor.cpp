#include "cpdp/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cpdp/error.hpp"
#include "cpdp/rng.hpp"
#include "text_util.hpp"

namespace cpdp::predict {

namespace {

using detail::append_number;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

std::vector<std::vector<double>> angle_windows(const std::vector<JointAngleState>& observed,
                                               std::size_t dof, std::size_t k) {
  std::vector<std::vector<double>> windows(dof);
  const std::size_t first = observed.size() - k;
  for (std::size_t i = 0; i < dof; ++i) {
    windows[i].reserve(k);
    for (std::size_t f = first; f < observed.size(); ++f) {
      windows[i].push_back(observed[f].angles(static_cast<Eigen::Index>(i)));
    }
  }
  return windows;
}

void shift_in(std::vector<double>& window, double value) {
  std::rotate(window.begin(), window.begin() + 1, window.end());
  window.back() = value;
}

JointPositions mean_positions(const PredictionCloud& cloud) {
  JointPositions out;
  for (std::size_t j = 0; j < cloud.joints.size(); ++j) {
    out[cloud.joints[j]] = cloud.mean_position(j);
  }
  return out;
}

// Single-sample cloud at the given angles, used when every sample of the
// first step is rejected.
PredictionCloud point_cloud(const KinematicChain& chain, const Eigen::VectorXd& angles,
                            double t) {
  PredictionCloud cloud;
  cloud.t = t;
  cloud.joints = chain.joint_names();
  cloud.angles = angles;
  std::vector<Vec3> pos;
  kinematics::joint_positions(chain, angles, pos);
  cloud.positions.resize(3, static_cast<Eigen::Index>(pos.size()));
  for (std::size_t j = 0; j < pos.size(); ++j) {
    cloud.positions.col(static_cast<Eigen::Index>(j)) = pos[j];
  }
  cloud.weights = Eigen::VectorXd::Ones(1);
  cloud.normalization = 1.0;
  return cloud;
}

}  // namespace

std::string_view mode_label(Mode mode) {
  switch (mode) {
    case Mode::kTaskSpaceGp:
      return "xyz";
    case Mode::kJointAngleGp:
      return "ja";
    case Mode::kConstrained:
      return "constr";
  }
  return "?";
}

Mode parse_mode(std::string_view text) {
  if (text == "xyz") return Mode::kTaskSpaceGp;
  if (text == "ja") return Mode::kJointAngleGp;
  if (text == "constr") return Mode::kConstrained;
  throw Error(ErrorCode::kConfig,
              "unknown mode '" + std::string(text) + "' (expected xyz, ja or constr)");
}

std::size_t PredictionConfig::steps() const {
  return static_cast<std::size_t>(std::llround(horizon / dt));
}

void PredictionConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorCode::kConfig, "dt must be > 0");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw Error(ErrorCode::kConfig, "horizon must be > 0");
  }
  if (!(observed_window > 0.0)) throw Error(ErrorCode::kConfig, "observed_window must be > 0");
  if (steps() == 0) throw Error(ErrorCode::kConfig, "horizon shorter than one step");
  if (mc_samples < 100) throw Error(ErrorCode::kConfig, "mc_samples must be >= 100");
}

AngleBounds compute_bounds(double theta_prev, double static_lb, double static_ub, double vel_ub,
                           double dt) {
  if (!std::isfinite(theta_prev)) throw_invalid("compute_bounds: theta_prev must be finite");
  if (!(static_lb < static_ub)) throw_invalid("compute_bounds: need static_lb < static_ub");
  if (!(vel_ub > 0.0) || !(dt > 0.0)) throw_invalid("compute_bounds: vel_ub and dt must be > 0");
  AngleBounds b;
  double theta = theta_prev;
  if (theta < static_lb || theta > static_ub) {
    theta = std::clamp(theta, static_lb, static_ub);
    b.clamped = true;
  }
  b.lb = std::max(static_lb, theta - vel_ub * dt);
  b.ub = std::min(static_ub, theta + vel_ub * dt);
  return b;
}

StepSpecs predict_step(const std::vector<gp::GpModel>& models,
                       const std::vector<std::vector<double>>& windows,
                       const KinematicChain& chain, double dt, bool truncate) {
  if (models.size() != chain.dof() || windows.size() != chain.dof()) {
    throw_invalid("predict_step: need one model and one window per angle");
  }
  StepSpecs out;
  out.specs.resize(chain.dof());
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const gp::Posterior post = models[i].posterior(windows[i]);
    TruncatedNormalSpec spec{post.mean, std::sqrt(post.variance)};
    if (truncate) {
      const AngleBounds b = compute_bounds(windows[i].back(), chain.angle_lb()(ii),
                                           chain.angle_ub()(ii), chain.vel_ub()(ii), dt);
      spec.lb = b.lb;
      spec.ub = b.ub;
      if (b.clamped) ++out.clamped;
      // A mean dozens of sigmas outside the band leaves no representable
      // mass; pull it onto the nearest edge instead.
      try {
        dist::TruncatedNormal probe(spec);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDegenerateTruncation) throw;
        spec.mu = std::clamp(spec.mu, spec.lb, spec.ub);
      }
    }
    out.specs[i] = spec;
  }
  return out;
}

std::size_t PredictionCloud::joint_index(const std::string& name) const {
  auto it = std::find(joints.begin(), joints.end(), name);
  if (it == joints.end()) throw_invalid("cloud has no joint '" + name + "'");
  return static_cast<std::size_t>(it - joints.begin());
}

Vec3 PredictionCloud::mean_position(std::size_t joint) const {
  Vec3 m = Vec3::Zero();
  for (std::size_t s = 0; s < size(); ++s) m += weights(static_cast<Eigen::Index>(s)) * position(s, joint);
  return m;
}

PredictionCloud transport_and_filter(const std::vector<TruncatedNormalSpec>& specs,
                                     const KinematicChain& chain,
                                     const scene::SceneConstraints& scene, double t,
                                     std::size_t n_samples, std::uint64_t seed,
                                     const TransportOptions& options) {
  const std::size_t dof = chain.dof();
  if (specs.size() != dof) throw_invalid("transport_and_filter: need one spec per angle");
  if (n_samples == 0) throw_invalid("transport_and_filter: n_samples must be >= 1");

  std::vector<dist::TruncatedNormal> tns;
  tns.reserve(dof);
  for (const auto& s : specs) tns.emplace_back(s);

  const auto& names = chain.joint_names();
  const std::size_t nj = names.size();
  const std::size_t density_frame =
      chain.frame_of(options.density_joint.empty() ? chain.end_joint() : options.density_joint);
  const std::size_t end_pos = chain.position_index(chain.end_joint());
  const bool check_scene = options.apply_scene && !scene.empty();

  PredictionCloud cloud;
  cloud.t = t;
  cloud.joints = names;
  cloud.angles.resize(static_cast<Eigen::Index>(dof), static_cast<Eigen::Index>(n_samples));
  cloud.positions.resize(3, static_cast<Eigen::Index>(n_samples * nj));
  Eigen::VectorXd log_w(static_cast<Eigen::Index>(n_samples));

  std::vector<Eigen::VectorXd> rejected_angles;
  std::vector<Vec3> rejected_positions;

  Rng rng(seed);
  Eigen::VectorXd theta(static_cast<Eigen::Index>(dof));
  Eigen::Matrix<double, 3, Eigen::Dynamic> jac;
  std::vector<Vec3> pos(nj);
  std::vector<kinematics::HomogeneousTransform> frames;
  std::vector<std::size_t> joint_frames;
  for (const auto& name : names) joint_frames.push_back(chain.frame_of(name));
  std::size_t accepted = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (std::size_t i = 0; i < dof; ++i) theta(static_cast<Eigen::Index>(i)) = tns[i].sample(rng);
    kinematics::frame_transforms(chain, theta, frames);
    for (std::size_t j = 0; j < nj; ++j) pos[j] = frames[joint_frames[j]].topRightCorner<3, 1>();
    if (check_scene) {
      bool ok = true;
      if (options.scope == RejectionScope::kEndJointOnly) {
        ok = scene::admits(scene, pos[end_pos], t);
      } else {
        for (std::size_t j = 0; j < nj && ok; ++j) ok = scene::admits(scene, pos[j], t);
      }
      if (!ok) {
        ++cloud.rejected_count;
        if (options.keep_rejected) {
          rejected_angles.push_back(theta);
          rejected_positions.insert(rejected_positions.end(), pos.begin(), pos.end());
        }
        continue;
      }
    }
    double lw = 0.0;
    for (std::size_t i = 0; i < dof; ++i) {
      lw += tns[i].log_pdf(theta(static_cast<Eigen::Index>(i)));
    }
    kinematics::jacobian_from_frames(chain, frames, density_frame, jac);
    const double pdet = kinematics::pseudo_det(jac);
    lw -= std::log(std::max(pdet, kinematics::kPseudoDetFloor));

    const auto a = static_cast<Eigen::Index>(accepted);
    cloud.angles.col(a) = theta;
    for (std::size_t j = 0; j < nj; ++j) {
      cloud.positions.col(static_cast<Eigen::Index>(accepted * nj + j)) = pos[j];
    }
    log_w(a) = lw;
    ++accepted;
  }

  if (options.keep_rejected) {
    cloud.rejected_angles.resize(static_cast<Eigen::Index>(dof),
                                 static_cast<Eigen::Index>(rejected_angles.size()));
    for (std::size_t r = 0; r < rejected_angles.size(); ++r) {
      cloud.rejected_angles.col(static_cast<Eigen::Index>(r)) = rejected_angles[r];
    }
    cloud.rejected_positions.resize(3, static_cast<Eigen::Index>(rejected_positions.size()));
    for (std::size_t r = 0; r < rejected_positions.size(); ++r) {
      cloud.rejected_positions.col(static_cast<Eigen::Index>(r)) = rejected_positions[r];
    }
  }

  if (accepted == 0) {
    throw EmptyCloudError(cloud.rejected_count, "all " + std::to_string(n_samples) +
                                                    " samples rejected at t=" + std::to_string(t));
  }
  const auto na = static_cast<Eigen::Index>(accepted);
  cloud.angles.conservativeResize(Eigen::NoChange, na);
  cloud.positions.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(accepted * nj));
  log_w.conservativeResize(na);

  // Normalise in log space so tiny products of densities do not underflow.
  const double max_lw = log_w.maxCoeff();
  if (max_lw == kNegInf || !std::isfinite(max_lw)) {
    cloud.weights = Eigen::VectorXd::Constant(na, 1.0 / static_cast<double>(accepted));
    cloud.normalization = 0.0;
  } else {
    cloud.weights = (log_w.array() - max_lw).exp().matrix();
    const double sum = cloud.weights.sum();
    cloud.weights /= sum;
    cloud.normalization = std::exp(max_lw) * sum;
  }
  return cloud;
}

std::size_t ModelSet::lag_order() const {
  if (!angles.empty()) return angles.front().lag_order();
  for (const auto& [name, models] : xyz) {
    if (!models.empty()) return models.front().lag_order();
  }
  throw_invalid("model set is empty");
}

PredictionResult predict_from_angles(const std::vector<JointAngleState>& observed,
                                     const ModelSet& models, const KinematicChain& chain,
                                     const scene::SceneConstraints& scene,
                                     const PredictionConfig& config) {
  config.validate();
  if (config.mode == Mode::kTaskSpaceGp) {
    throw_invalid("predict_from_angles: task-space mode works on positions");
  }
  if (models.angles.size() != chain.dof()) {
    throw_invalid("predict_from_angles: need " + std::to_string(chain.dof()) + " angle models");
  }
  const std::size_t k = models.lag_order();
  if (observed.size() < k) {
    throw_invalid("predict_from_angles: need at least " + std::to_string(k) +
                  " observed frames, got " + std::to_string(observed.size()));
  }
  for (const auto& s : observed) {
    if (static_cast<std::size_t>(s.angles.size()) != chain.dof()) {
      throw_invalid("predict_from_angles: observed angle vector has wrong length");
    }
  }
  const bool constrained = config.mode == Mode::kConstrained;
  const std::size_t steps = config.steps();

  PredictionResult result;
  result.mode = config.mode;
  result.observed_angles.assign(observed.end() - static_cast<std::ptrdiff_t>(k), observed.end());
  auto windows = angle_windows(observed, chain.dof(), k);

  TransportOptions opts;
  opts.apply_scene = constrained;
  opts.scope = config.rejection;
  opts.keep_rejected = config.keep_rejected;

  const double t_last = observed.back().timestamp;
  for (std::size_t s = 1; s <= steps; ++s) {
    const double t = t_last + static_cast<double>(s) * config.dt;
    StepSpecs step = predict_step(models.angles, windows, chain, config.dt, constrained);
    result.clamped_bounds += step.clamped;

    std::vector<dist::TruncatedNormal> tns;
    for (const auto& sp : step.specs) tns.emplace_back(sp);

    PredictionCloud cloud;
    try {
      cloud = transport_and_filter(step.specs, chain, scene, t, config.mc_samples,
                                   derive_seed(config.seed, s), opts);
    } catch (const EmptyCloudError& e) {
      if (!result.clouds.empty()) {
        cloud = result.clouds.back();
      } else {
        Eigen::VectorXd means(static_cast<Eigen::Index>(chain.dof()));
        for (std::size_t i = 0; i < tns.size(); ++i) means(static_cast<Eigen::Index>(i)) = tns[i].mean();
        cloud = point_cloud(chain, means, t);
      }
      cloud.t = t;
      cloud.rejected_count = e.rejected_count();
      cloud.degraded = true;
      ++result.degraded_steps;
    }
    result.mean_trajectory.push_back(mean_positions(cloud));
    result.clouds.push_back(std::move(cloud));

    // Feed the truncated mean back as the next lagged input.
    for (std::size_t i = 0; i < chain.dof(); ++i) shift_in(windows[i], tns[i].mean());
    result.specs.push_back(std::move(step.specs));
  }
  return result;
}

PredictionResult predict_task_space(const std::vector<PoseFrame>& observed,
                                    const ModelSet& models, const KinematicChain& chain,
                                    const PredictionConfig& config) {
  config.validate();
  const auto& names = chain.joint_names();
  for (const auto& name : names) {
    auto it = models.xyz.find(name);
    if (it == models.xyz.end() || it->second.size() != 3) {
      throw_invalid("predict_task_space: missing x/y/z models for joint '" + name + "'");
    }
  }
  const std::size_t k = models.lag_order();
  if (observed.size() < k) {
    throw_invalid("predict_task_space: need at least " + std::to_string(k) +
                  " observed frames, got " + std::to_string(observed.size()));
  }
  const std::size_t nj = names.size();
  // windows[j * 3 + c]
  std::vector<std::vector<double>> windows(nj * 3);
  for (std::size_t j = 0; j < nj; ++j) {
    for (std::size_t f = observed.size() - k; f < observed.size(); ++f) {
      auto it = observed[f].joints.find(names[j]);
      if (it == observed[f].joints.end()) {
        throw_invalid("predict_task_space: frame missing joint '" + names[j] + "'");
      }
      for (int c = 0; c < 3; ++c) windows[j * 3 + static_cast<std::size_t>(c)].push_back(it->second(c));
    }
  }

  PredictionResult result;
  result.mode = Mode::kTaskSpaceGp;
  const std::size_t n = config.mc_samples;
  const double t_last = observed.back().t;
  for (std::size_t s = 1; s <= config.steps(); ++s) {
    std::vector<TruncatedNormalSpec> specs(nj * 3);
    for (std::size_t j = 0; j < nj; ++j) {
      const auto& m = models.xyz.at(names[j]);
      for (std::size_t c = 0; c < 3; ++c) {
        const gp::Posterior post = m[c].posterior(windows[j * 3 + c]);
        specs[j * 3 + c] = {post.mean, std::sqrt(post.variance)};
      }
    }
    PredictionCloud cloud;
    cloud.t = t_last + static_cast<double>(s) * config.dt;
    cloud.joints = names;
    cloud.positions.resize(3, static_cast<Eigen::Index>(n * nj));
    Eigen::VectorXd log_w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    Rng rng(derive_seed(config.seed, s));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < nj; ++j) {
        Vec3 p;
        for (std::size_t c = 0; c < 3; ++c) {
          const double z = rng.normal();
          const auto& sp = specs[j * 3 + c];
          p(static_cast<Eigen::Index>(c)) = sp.mu + sp.sigma * z;
          log_w(static_cast<Eigen::Index>(i)) += -0.5 * z * z - std::log(sp.sigma) - kHalfLog2Pi;
        }
        cloud.positions.col(static_cast<Eigen::Index>(i * nj + j)) = p;
      }
    }
    const double max_lw = log_w.maxCoeff();
    cloud.weights = (log_w.array() - max_lw).exp().matrix();
    const double sum = cloud.weights.sum();
    cloud.weights /= sum;
    cloud.normalization = std::exp(max_lw) * sum;

    result.mean_trajectory.push_back(mean_positions(cloud));
    result.clouds.push_back(std::move(cloud));
    for (std::size_t w = 0; w < windows.size(); ++w) shift_in(windows[w], specs[w].mu);
    result.specs.push_back(std::move(specs));
  }
  return result;
}

PredictionResult predict_horizon(const dataio::ObservedSequence& obs, const ModelSet& models,
                                 const KinematicChain& chain,
                                 const scene::SceneConstraints& scene,
                                 const PredictionConfig& config, const ik::PsoConfig& ik_config) {
  config.validate();
  if (obs.size() < 2) throw_invalid("predict_horizon: need at least two observed frames");
  const dataio::ObservedSequence grid = dataio::resample_to_end(obs, 1.0 / config.dt);
  const std::size_t k = models.lag_order();
  if (grid.size() < k) {
    throw_invalid("predict_horizon: observation covers " + std::to_string(grid.size()) +
                  " frames at dt=" + std::to_string(config.dt) + ", lag order needs " +
                  std::to_string(k));
  }
  const std::vector<PoseFrame> recent(grid.frames.end() - static_cast<std::ptrdiff_t>(k),
                                      grid.frames.end());
  if (config.mode == Mode::kTaskSpaceGp) return predict_task_space(recent, models, chain, config);

  const auto states = ik::states_of(ik::solve_trajectory(recent, chain, ik_config));
  return predict_from_angles(states, models, chain, scene, config);
}

std::string format_clouds_csv(const PredictionResult& result, std::size_t dof) {
  std::string out = "step,t,sample_id";
  for (std::size_t i = 1; i <= dof; ++i) out += ",theta_" + std::to_string(i);
  out += ",joint,x,y,z,weight,accepted\n";

  auto emit = [&](std::size_t step, double t, std::size_t id, const Eigen::MatrixXd& angles,
                  Eigen::Index col, const std::string& joint, const Vec3& p, double w,
                  bool accepted) {
    out += std::to_string(step);
    out += ',';
    append_number(out, t);
    out += ',';
    out += std::to_string(id);
    for (std::size_t i = 0; i < dof; ++i) {
      out += ',';
      const auto ii = static_cast<Eigen::Index>(i);
      append_number(out, angles.rows() > ii ? angles(ii, col)
                                            : std::numeric_limits<double>::quiet_NaN());
    }
    out += ',';
    out += joint;
    for (int c = 0; c < 3; ++c) {
      out += ',';
      append_number(out, p(c));
    }
    out += ',';
    append_number(out, w);
    out += accepted ? ",1\n" : ",0\n";
  };

  for (std::size_t s = 0; s < result.clouds.size(); ++s) {
    const auto& cloud = result.clouds[s];
    const std::size_t nj = cloud.joints.size();
    std::size_t id = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i, ++id) {
      for (std::size_t j = 0; j < nj; ++j) {
        emit(s + 1, cloud.t, id, cloud.angles, static_cast<Eigen::Index>(i), cloud.joints[j],
             cloud.position(i, j), cloud.weights(static_cast<Eigen::Index>(i)), true);
      }
    }
    const auto nr = cloud.rejected_angles.cols();
    for (Eigen::Index r = 0; r < nr; ++r, ++id) {
      for (std::size_t j = 0; j < nj; ++j) {
        emit(s + 1, cloud.t, id, cloud.rejected_angles, r, cloud.joints[j],
             cloud.rejected_positions.col(r * static_cast<Eigen::Index>(nj) +
                                          static_cast<Eigen::Index>(j)),
             0.0, false);
      }
    }
  }
  return out;
}

std::string format_mean_trajectory_csv(const PredictionResult& result) {
  std::string out = "step,t,joint,x,y,z\n";
  for (std::size_t s = 0; s < result.mean_trajectory.size(); ++s) {
    for (const auto& [name, p] : result.mean_trajectory[s]) {
      out += std::to_string(s + 1);
      out += ',';
      append_number(out, result.clouds[s].t);
      out += ',';
      out += name;
      for (int c = 0; c < 3; ++c) {
        out += ',';
        append_number(out, p(c));
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace cpdp::predict
