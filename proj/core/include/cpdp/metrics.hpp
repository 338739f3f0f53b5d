#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "cpdp/predictor.hpp"
#include "cpdp/types.hpp"

namespace cpdp::metrics {

// [step][joint]
using PositionTrack = std::vector<std::vector<Vec3>>;

inline constexpr double kDensityFloor = 1e-12;
inline constexpr double kBoxPadding = 0.05;     // fraction of the extent on each side
inline constexpr double kMinPadding = 1e-3;     // m, used when a cloud is flat along an axis
inline constexpr std::size_t kDefaultGridRes = 20;

// Mean Euclidean distance over steps and joints, in millimetres (inputs in m).
double mpjpe(const PositionTrack& truth, const PositionTrack& predicted);

// Voxel-grid density of one joint's sub-cloud at a point: accepted weight in
// the voxel holding the point divided by the voxel volume, floored.
double voxel_density(const predict::PredictionCloud& cloud, std::size_t joint,
                     const Vec3& point, std::size_t grid_res = kDefaultGridRes);

// Mean over steps of -log density of the truth under the cloud.
double nll(const std::vector<Vec3>& truth, const std::vector<predict::PredictionCloud>& clouds,
           std::size_t joint, std::size_t grid_res = kDefaultGridRes);

struct Summary {
  double mean = 0.0;
  double std_error = 0.0;
};

// Mean and standard error of the mean (sample std / sqrt(n)).
Summary summarize(const std::vector<double>& values);

struct ActionStats {
  Summary mpjpe_mm;
  Summary nll;
  std::size_t n_windows = 0;
};

struct EvaluationReport {
  std::string mode;
  // Per repetition means, aggregated into the summaries below.
  std::vector<double> mpjpe_per_repetition;
  std::vector<double> nll_per_repetition;
  // nll_per_window[repetition][window]
  std::vector<std::vector<double>> nll_per_window;
  Summary mpjpe_mm;
  Summary nll;
  std::size_t n_windows = 0;
  std::map<std::string, ActionStats> per_action;
};

// One row per (mode, action): mode,action,mpjpe_mm,mpjpe_stderr,nll_mean,nll_stderr,n_windows
std::string format_report_csv(const std::vector<EvaluationReport>& reports);
// mode,repetition,window,action,nll
std::string format_window_nll_csv(const std::vector<EvaluationReport>& reports,
                                  const std::vector<std::string>& window_actions);

}  // namespace cpdp::metrics
