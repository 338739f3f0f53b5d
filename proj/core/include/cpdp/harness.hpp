#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cpdp/dataio.hpp"
#include "cpdp/ik_solver.hpp"
#include "cpdp/kinematics.hpp"
#include "cpdp/metrics.hpp"
#include "cpdp/predictor.hpp"
#include "cpdp/scene.hpp"

namespace cpdp::harness {

namespace fs = std::filesystem;

struct GpConfig {
  std::size_t lag_order = 0;  // 0: round(observed_window / dt) + 1
  std::size_t inducing = 30;
  std::size_t max_iterations = 200;
  double tolerance = 1e-6;
  bool optimize_inducing = true;
  std::optional<std::uint64_t> seed;
};

// Per-angle sinusoid family; each trajectory draws amplitude and frequency
// uniformly from the ranges and a uniform phase.
struct AngleFamily {
  double center = 0.0;
  double amplitude_min = 0.0;
  double amplitude_max = 0.0;
  double frequency_min = 0.2;
  double frequency_max = 0.5;
};

struct SuiteConfig {
  std::size_t train_trajectories = 10;
  std::size_t test_trajectories = 20;
  double duration = 6.0;
  double rate_hz = 30.0;
  double noise_sigma = 0.005;
  // Keep-in table placed this far below the lowest true wrist position of each
  // test trajectory; negative disables the table.
  double table_clearance = 0.02;
  std::vector<AngleFamily> angles;  // empty: default family for the chain
  std::optional<std::uint64_t> seed;
};

struct EvalConfig {
  std::size_t repetitions = 25;
  double window_stride = 1.0;  // s between evaluation windows
  std::size_t grid_res = metrics::kDefaultGridRes;
  std::size_t threads = 0;     // 0: hardware concurrency
  std::vector<predict::Mode> modes = {predict::Mode::kTaskSpaceGp, predict::Mode::kJointAngleGp,
                                      predict::Mode::kConstrained};
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::optional<fs::path> chain_path;
  std::optional<fs::path> scene_path;
  predict::PredictionConfig prediction;
  std::optional<double> predict_start;  // time of the last observed frame for `predict`
  GpConfig gp;
  ik::PsoConfig ik;  // ik.seed is ignored unless ik_seed_override is set
  std::optional<std::uint64_t> ik_seed_override;
  std::vector<fs::path> train_files;
  std::vector<fs::path> test_files;
  std::optional<SuiteConfig> synthetic;
  EvalConfig evaluate;
  fs::path output_dir = "out";
  std::optional<fs::path> models_dir;

  std::size_t lag_order() const;
  fs::path resolved_models_dir() const;
  std::uint64_t gp_seed() const;
  std::uint64_t ik_seed() const;
  std::uint64_t suite_seed() const;
  std::uint64_t prediction_seed() const;
  // Throws kConfig / kIo when values are out of range or files are missing.
  void validate() const;
};

// Relative paths in the document are resolved against base_dir.
RunConfig parse_run_config(const std::string& json_text, const fs::path& base_dir);
RunConfig load_run_config(const fs::path& path);

kinematics::KinematicChain load_chain_for(const RunConfig& cfg);
scene::SceneConstraints load_scene_for(const RunConfig& cfg);

struct TestCase {
  std::string name;
  std::string action;
  dataio::ObservedSequence observed;        // on the dt grid
  std::vector<JointPositions> truth;        // ground truth per grid frame
  scene::SceneConstraints scene;
};

struct Dataset {
  std::vector<dataio::ObservedSequence> train;  // on the dt grid
  std::vector<TestCase> test;
  std::size_t dropped_frames = 0;
};

std::vector<AngleFamily> default_family(const kinematics::KinematicChain& chain);

// Synthetic sinusoid configs for the suite; stream selects train (0) or test (1).
std::vector<dataio::SynthConfig> suite_configs(const SuiteConfig& suite,
                                               const kinematics::KinematicChain& chain,
                                               std::uint64_t seed, int stream);

Dataset synthetic_dataset(const SuiteConfig& suite, const kinematics::KinematicChain& chain,
                          const scene::SceneConstraints& base_scene, double dt,
                          std::uint64_t seed);
Dataset load_dataset(const RunConfig& cfg, const kinematics::KinematicChain& chain,
                     const scene::SceneConstraints& scene);

// Per-action model sets; the empty label holds the model fitted on all data.
struct ModelLibrary {
  std::map<std::string, predict::ModelSet> sets;
  std::size_t lag_order = 0;

  const predict::ModelSet& for_action(const std::string& action) const;
};

struct FitSettings {
  bool angles = true;
  bool task_space = true;
  std::size_t threads = 1;
};

ModelLibrary fit_library(const std::vector<dataio::ObservedSequence>& train,
                         const kinematics::KinematicChain& chain, const RunConfig& cfg,
                         const FitSettings& settings);
void save_library(const ModelLibrary& lib, const fs::path& dir);
ModelLibrary load_library(const fs::path& dir);

struct EvaluationOutput {
  std::vector<metrics::EvaluationReport> reports;
  metrics::Summary baseline_mpjpe;  // zero-order hold
  std::vector<std::string> window_actions;
  std::size_t degraded_steps = 0;
  std::size_t invariant_violations = 0;
};

EvaluationOutput evaluate(const Dataset& data, const ModelLibrary& lib,
                          const kinematics::KinematicChain& chain, const RunConfig& cfg);

// Effective worker count: configured (or hardware) capped by CPDP_THREADS.
std::size_t worker_count(std::size_t configured);

// Command entry points. Each writes its artifacts below cfg.output_dir and
// returns a short human summary.
std::string run_synth(const RunConfig& cfg);
std::string run_fit(const RunConfig& cfg);
std::string run_predict(const RunConfig& cfg);
std::string run_evaluate(const RunConfig& cfg);

}  // namespace cpdp::harness
