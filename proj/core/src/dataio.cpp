#include "cpdp/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "cpdp/error.hpp"
#include "cpdp/rng.hpp"
#include "json_util.hpp"
#include "text_util.hpp"

namespace cpdp::dataio {

namespace {

using detail::append_number;

constexpr std::string_view kHeader = "frame_index,time_s,joint_name,x_m,y_m,z_m";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void fail_line(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kParse, "trajectory: line " + std::to_string(line) + ": " + what);
}

template <typename T>
T parse_number(std::string_view s, std::size_t line, const char* field) {
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    fail_line(line, std::string("cannot parse ") + field + " '" + std::string(s) + "'");
  }
  return value;
}

PoseFrame interpolate(const PoseFrame& a, const PoseFrame& b, double t) {
  PoseFrame f;
  f.t = t;
  const double span = b.t - a.t;
  const double w = span > 0.0 ? (t - a.t) / span : 0.0;
  for (const auto& [name, pa] : a.joints) {
    const Vec3& pb = b.joints.at(name);
    f.joints[name] = w == 0.0 ? pa : (w == 1.0 ? pb : Vec3(pa + w * (pb - pa)));
  }
  return f;
}

PoseFrame sample_at(const std::vector<PoseFrame>& frames, std::size_t& cursor, double t) {
  while (cursor + 2 < frames.size() && frames[cursor + 1].t <= t) ++cursor;
  if (frames.size() == 1) return interpolate(frames[0], frames[0], t);
  return interpolate(frames[cursor], frames[cursor + 1], std::clamp(t, frames[cursor].t, frames[cursor + 1].t));
}

void check_resample_input(const ObservedSequence& seq, double rate_hz) {
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) throw_invalid("resample rate must be > 0");
  if (seq.frames.size() < 2) throw_invalid("resample needs at least two frames");
}

}  // namespace

TrajectoryFile parse_trajectory(const std::string& csv_text) {
  TrajectoryFile file;
  std::istringstream in(csv_text);
  std::string raw;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto colon = line.find(':');
      if (colon == std::string_view::npos) continue;
      const auto key = trim(line.substr(1, colon - 1));
      const auto value = trim(line.substr(colon + 1));
      if (key == "rate_hz") {
        file.rate_hz = parse_number<double>(value, line_no, "rate_hz");
      } else if (key == "subject") {
        file.subject = std::string(value);
      } else if (key == "action") {
        file.action = std::string(value);
      }
      continue;
    }
    if (!header_seen) {
      if (line != kHeader) fail_line(line_no, "expected header '" + std::string(kHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto fields = split(line, ',');
    if (fields.size() != 6) fail_line(line_no, "expected 6 fields, got " + std::to_string(fields.size()));
    TrajectoryRow row;
    row.frame_index = parse_number<std::size_t>(fields[0], line_no, "frame_index");
    row.time_s = parse_number<double>(fields[1], line_no, "time_s");
    row.joint = std::string(fields[2]);
    if (row.joint.empty()) fail_line(line_no, "empty joint name");
    for (int c = 0; c < 3; ++c) {
      row.position[c] = parse_number<double>(fields[static_cast<std::size_t>(3 + c)], line_no, "coordinate");
    }
    if (!std::isfinite(row.time_s) || !row.position.allFinite()) fail_line(line_no, "non-finite value");
    file.rows.push_back(std::move(row));
  }
  if (!header_seen) throw Error(ErrorCode::kParse, "trajectory: missing header row");
  return file;
}

TrajectoryFile read_trajectory_file(const std::filesystem::path& path) {
  return parse_trajectory(detail::read_text_file(path));
}

std::string format_trajectory(const TrajectoryFile& file) {
  std::string out;
  if (file.rate_hz > 0.0) {
    out += "# rate_hz: ";
    append_number(out, file.rate_hz);
    out += '\n';
  }
  if (!file.subject.empty()) out += "# subject: " + file.subject + "\n";
  if (!file.action.empty()) out += "# action: " + file.action + "\n";
  out += kHeader;
  out += '\n';
  for (const auto& r : file.rows) {
    out += std::to_string(r.frame_index);
    out += ',';
    append_number(out, r.time_s);
    out += ',';
    out += r.joint;
    for (int c = 0; c < 3; ++c) {
      out += ',';
      append_number(out, r.position[c]);
    }
    out += '\n';
  }
  return out;
}

void save_trajectory(const TrajectoryFile& file, const std::filesystem::path& path) {
  detail::write_text_file(path, format_trajectory(file));
}

LoadResult to_sequences(const TrajectoryFile& file, double gap_s) {
  std::set<std::string> joint_set;
  for (const auto& r : file.rows) joint_set.insert(r.joint);

  std::vector<std::size_t> order;
  std::map<std::size_t, PoseFrame> frames;
  for (const auto& r : file.rows) {
    auto [it, inserted] = frames.try_emplace(r.frame_index);
    if (inserted) {
      order.push_back(r.frame_index);
      it->second.t = r.time_s;
    } else if (it->second.t != r.time_s) {
      throw Error(ErrorCode::kValidation,
                  "trajectory: frame " + std::to_string(r.frame_index) + " has inconsistent times");
    }
    it->second.joints[r.joint] = r.position;
  }

  LoadResult result;
  ObservedSequence current;
  current.subject = file.subject;
  current.action = file.action;
  double last_t = -std::numeric_limits<double>::infinity();
  for (std::size_t idx : order) {
    PoseFrame& f = frames.at(idx);
    if (f.joints.size() != joint_set.size()) {
      ++result.dropped_frames;
      continue;
    }
    if (f.t < last_t) {
      throw Error(ErrorCode::kValidation,
                  "trajectory: time decreases at frame " + std::to_string(idx));
    }
    if (f.t == last_t) {
      ++result.dropped_frames;
      continue;
    }
    if (!current.frames.empty() && f.t - last_t > gap_s) {
      result.sequences.push_back(current);
      current.frames.clear();
    }
    last_t = f.t;
    current.frames.push_back(std::move(f));
  }
  if (!current.frames.empty()) result.sequences.push_back(current);
  return result;
}

LoadResult load_trajectory(const std::filesystem::path& path, double gap_s) {
  return to_sequences(read_trajectory_file(path), gap_s);
}

TrajectoryFile to_trajectory_file(const ObservedSequence& seq, double rate_hz) {
  TrajectoryFile file;
  file.rate_hz = rate_hz;
  file.subject = seq.subject;
  file.action = seq.action;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    for (const auto& [name, p] : seq.frames[i].joints) {
      file.rows.push_back({i, seq.frames[i].t, name, p});
    }
  }
  return file;
}

ObservedSequence resample(const ObservedSequence& seq, double rate_hz) {
  check_resample_input(seq, rate_hz);
  ObservedSequence out;
  out.subject = seq.subject;
  out.action = seq.action;
  const double t0 = seq.frames.front().t;
  const double t1 = seq.frames.back().t;
  const double step = 1.0 / rate_hz;
  std::size_t cursor = 0;
  for (std::size_t i = 0;; ++i) {
    const double t = t0 + static_cast<double>(i) * step;
    if (t > t1 + 1e-9) break;
    out.frames.push_back(sample_at(seq.frames, cursor, std::min(t, t1)));
    out.frames.back().t = t;
  }
  return out;
}

ObservedSequence resample_to_end(const ObservedSequence& seq, double rate_hz) {
  check_resample_input(seq, rate_hz);
  const double t0 = seq.frames.front().t;
  const double t1 = seq.frames.back().t;
  const double step = 1.0 / rate_hz;
  const auto count = static_cast<std::size_t>(std::floor((t1 - t0) / step + 1e-9)) + 1;
  ObservedSequence out;
  out.subject = seq.subject;
  out.action = seq.action;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const double t = std::max(t1 - static_cast<double>(count - 1 - i) * step, t0);
    out.frames.push_back(sample_at(seq.frames, cursor, t));
    out.frames.back().t = t;
  }
  return out;
}

void validate_synth(const SynthConfig& cfg, const kinematics::KinematicChain& chain) {
  if (!(cfg.duration > 0.0) || !(cfg.rate_hz > 0.0)) {
    throw Error(ErrorCode::kConfig, "synthetic: duration and rate must be > 0");
  }
  if (!(cfg.noise_sigma >= 0.0)) throw Error(ErrorCode::kConfig, "synthetic: noise_sigma must be >= 0");
  if (cfg.angles.size() != chain.dof()) {
    throw Error(ErrorCode::kConfig, "synthetic: need one sinusoid per angle (" +
                                        std::to_string(chain.dof()) + ")");
  }
  for (std::size_t i = 0; i < cfg.angles.size(); ++i) {
    const auto& s = cfg.angles[i];
    const auto ii = static_cast<Eigen::Index>(i);
    const std::string name = "theta_" + std::to_string(i + 1);
    if (s.amplitude < 0.0 || s.frequency < 0.0) {
      throw Error(ErrorCode::kConfig, "synthetic: " + name + " has negative amplitude/frequency");
    }
    if (s.center - s.amplitude < chain.angle_lb()[ii] || s.center + s.amplitude > chain.angle_ub()[ii]) {
      throw Error(ErrorCode::kConfig, "synthetic: " + name + " leaves its static bounds");
    }
    if (s.amplitude * 2.0 * std::numbers::pi * s.frequency > chain.vel_ub()[ii]) {
      throw Error(ErrorCode::kConfig, "synthetic: " + name + " exceeds its velocity bound");
    }
  }
}

SyntheticTrajectory generate_synthetic(const SynthConfig& cfg,
                                       const kinematics::KinematicChain& chain) {
  validate_synth(cfg, chain);
  SyntheticTrajectory out;
  out.file.rate_hz = cfg.rate_hz;
  out.file.subject = cfg.subject;
  out.file.action = cfg.action;
  Rng rng(cfg.seed);
  const auto count = static_cast<std::size_t>(std::floor(cfg.duration * cfg.rate_hz + 1e-9)) + 1;
  const auto& names = chain.joint_names();
  std::vector<Vec3> positions;
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / cfg.rate_hz;
    kinematics::JointAngleState state;
    state.timestamp = t;
    state.angles.resize(static_cast<Eigen::Index>(chain.dof()));
    for (std::size_t a = 0; a < cfg.angles.size(); ++a) {
      const auto& s = cfg.angles[a];
      state.angles[static_cast<Eigen::Index>(a)] =
          s.center + s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency * t + s.phase);
    }
    kinematics::joint_positions(chain, state.angles, positions);
    for (std::size_t j = 0; j < names.size(); ++j) {
      Vec3 p = positions[j];
      if (cfg.noise_sigma > 0.0) {
        for (int c = 0; c < 3; ++c) p[c] += cfg.noise_sigma * rng.normal();
      }
      out.file.rows.push_back({i, t, names[j], p});
    }
    out.truth.push_back(std::move(state));
  }
  return out;
}

std::string format_angles(const std::vector<kinematics::JointAngleState>& states) {
  std::string out = "time_s";
  const Eigen::Index n = states.empty() ? 0 : states.front().angles.size();
  for (Eigen::Index i = 0; i < n; ++i) out += ",theta_" + std::to_string(i + 1);
  out += '\n';
  for (const auto& s : states) {
    append_number(out, s.timestamp);
    for (Eigen::Index i = 0; i < s.angles.size(); ++i) {
      out += ',';
      append_number(out, s.angles[i]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace cpdp::dataio
