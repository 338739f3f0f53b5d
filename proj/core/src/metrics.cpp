#include "cpdp/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cpdp/error.hpp"
#include "text_util.hpp"

namespace cpdp::metrics {

namespace {

using detail::append_fixed;

void append_row(std::string& out, const std::string& mode, const std::string& action,
                const Summary& mpjpe_mm, const Summary& nll_s, std::size_t n_windows) {
  out += mode;
  out += ',';
  out += action;
  for (double v : {mpjpe_mm.mean, mpjpe_mm.std_error, nll_s.mean, nll_s.std_error}) {
    out += ',';
    append_fixed(out, v, 6);
  }
  out += ',';
  out += std::to_string(n_windows);
  out += '\n';
}

}  // namespace

double mpjpe(const PositionTrack& truth, const PositionTrack& predicted) {
  if (truth.size() != predicted.size() || truth.empty()) {
    throw_invalid("mpjpe: step counts differ or are zero");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (truth[t].size() != predicted[t].size() || truth[t].empty()) {
      throw_invalid("mpjpe: joint counts differ at step " + std::to_string(t));
    }
    for (std::size_t j = 0; j < truth[t].size(); ++j) {
      total += (truth[t][j] - predicted[t][j]).norm();
      ++count;
    }
  }
  return 1000.0 * total / static_cast<double>(count);
}

double voxel_density(const predict::PredictionCloud& cloud, std::size_t joint,
                     const Vec3& point, std::size_t grid_res) {
  if (grid_res < 4) throw_invalid("nll: grid_res must be >= 4");
  if (joint >= cloud.joints.size()) throw_invalid("nll: joint index out of range");
  const std::size_t n = cloud.size();
  if (n == 0) return kDensityFloor;

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::size_t s = 0; s < n; ++s) {
    const Vec3 p = cloud.position(s, joint);
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  for (int c = 0; c < 3; ++c) {
    const double extent = hi(c) - lo(c);
    const double pad = extent > 0.0 ? kBoxPadding * extent : kMinPadding;
    lo(c) -= pad;
    hi(c) += pad;
  }
  if ((point.array() < lo.array()).any() || (point.array() > hi.array()).any()) {
    return kDensityFloor;
  }
  const double res = static_cast<double>(grid_res);
  const Vec3 cell = (hi - lo) / res;
  auto voxel_of = [&](const Vec3& p) {
    Eigen::Vector3i idx;
    for (int c = 0; c < 3; ++c) {
      const auto i = static_cast<long>(std::floor((p(c) - lo(c)) / cell(c)));
      idx(c) = static_cast<int>(std::clamp(i, 0L, static_cast<long>(grid_res) - 1));
    }
    return idx;
  };
  const Eigen::Vector3i target = voxel_of(point);
  double mass = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    if (voxel_of(cloud.position(s, joint)) == target) {
      mass += cloud.weights(static_cast<Eigen::Index>(s));
    }
  }
  return std::max(mass / cell.prod(), kDensityFloor);
}

double nll(const std::vector<Vec3>& truth, const std::vector<predict::PredictionCloud>& clouds,
           std::size_t joint, std::size_t grid_res) {
  if (truth.size() != clouds.size() || truth.empty()) {
    throw_invalid("nll: need one cloud per truth step");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    total -= std::log(voxel_density(clouds[t], joint, truth[t], grid_res));
  }
  return total / static_cast<double>(truth.size());
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) throw_invalid("summarize needs at least one value");
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

std::string format_report_csv(const std::vector<EvaluationReport>& reports) {
  std::string out = "mode,action,mpjpe_mm,mpjpe_stderr,nll_mean,nll_stderr,n_windows\n";
  for (const auto& r : reports) {
    append_row(out, r.mode, "all", r.mpjpe_mm, r.nll, r.n_windows);
    for (const auto& [action, stats] : r.per_action) {
      if (action == "all") continue;
      append_row(out, r.mode, action, stats.mpjpe_mm, stats.nll, stats.n_windows);
    }
  }
  return out;
}

std::string format_window_nll_csv(const std::vector<EvaluationReport>& reports,
                                  const std::vector<std::string>& window_actions) {
  std::string out = "mode,repetition,window,action,nll\n";
  for (const auto& r : reports) {
    for (std::size_t rep = 0; rep < r.nll_per_window.size(); ++rep) {
      const auto& row = r.nll_per_window[rep];
      for (std::size_t w = 0; w < row.size(); ++w) {
        out += r.mode + ',' + std::to_string(rep) + ',' + std::to_string(w) + ',';
        out += w < window_actions.size() && !window_actions[w].empty() ? window_actions[w] : "all";
        out += ',';
        append_fixed(out, row[w], 6);
        out += '\n';
      }
    }
  }
  return out;
}

}  // namespace cpdp::metrics
