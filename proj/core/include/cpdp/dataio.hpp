#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cpdp/kinematics.hpp"
#include "cpdp/types.hpp"

namespace cpdp::dataio {

// S(t): time-ordered frames of joint positions.
struct ObservedSequence {
  std::vector<PoseFrame> frames;
  std::string subject;
  std::string action;

  std::size_t size() const { return frames.size(); }
  double duration() const { return frames.empty() ? 0.0 : frames.back().t - frames.front().t; }
};

struct TrajectoryRow {
  std::size_t frame_index = 0;
  double time_s = 0.0;
  std::string joint;
  Vec3 position = Vec3::Zero();
};

// Canonical trajectory file:
//   optional "# key: value" metadata lines (rate_hz, subject, action), then the
//   header "frame_index,time_s,joint_name,x_m,y_m,z_m", then one row per joint
//   per frame.
struct TrajectoryFile {
  std::vector<TrajectoryRow> rows;
  double rate_hz = 0.0;
  std::string subject;
  std::string action;
};

struct LoadResult {
  std::vector<ObservedSequence> sequences;
  std::size_t dropped_frames = 0;  // frames missing one or more joints
};

inline constexpr double kGapSplitSeconds = 0.5;

TrajectoryFile parse_trajectory(const std::string& csv_text);
TrajectoryFile read_trajectory_file(const std::filesystem::path& path);
std::string format_trajectory(const TrajectoryFile& file);
void save_trajectory(const TrajectoryFile& file, const std::filesystem::path& path);

// Groups rows into frames (joint order within a frame is irrelevant), drops
// incomplete frames and splits on time gaps larger than gap_s.
LoadResult to_sequences(const TrajectoryFile& file, double gap_s = kGapSplitSeconds);
LoadResult load_trajectory(const std::filesystem::path& path, double gap_s = kGapSplitSeconds);

TrajectoryFile to_trajectory_file(const ObservedSequence& seq, double rate_hz);

// Linear interpolation of every joint onto t0, t0 + 1/rate, ... <= t_end.
ObservedSequence resample(const ObservedSequence& seq, double rate_hz);
// Same, but the grid is anchored at the last frame: t_end, t_end - 1/rate, ...
ObservedSequence resample_to_end(const ObservedSequence& seq, double rate_hz);

struct Sinusoid {
  double center = 0.0;     // rad
  double amplitude = 0.0;  // rad
  double frequency = 0.0;  // Hz
  double phase = 0.0;      // rad
};

struct SynthConfig {
  double duration = 5.0;  // s
  double rate_hz = 30.0;
  std::vector<Sinusoid> angles;  // one per free angle
  double noise_sigma = 0.0;      // m, isotropic
  std::uint64_t seed = 0;
  std::string subject = "synthetic";
  std::string action;
};

struct SyntheticTrajectory {
  TrajectoryFile file;
  std::vector<kinematics::JointAngleState> truth;
};

// Throws ErrorCode::kConfig naming the first angle whose sinusoid leaves the
// static bounds or exceeds the velocity bound.
void validate_synth(const SynthConfig& cfg, const kinematics::KinematicChain& chain);
SyntheticTrajectory generate_synthetic(const SynthConfig& cfg,
                                       const kinematics::KinematicChain& chain);

// Writes "time_s,theta_1,...,theta_pn".
std::string format_angles(const std::vector<kinematics::JointAngleState>& states);

}  // namespace cpdp::dataio
