#include "cpdp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "cpdp/error.hpp"
#include "cpdp/gp_regression.hpp"
#include "cpdp/rng.hpp"
#include "json_util.hpp"
#include "text_util.hpp"

namespace cpdp::harness {

namespace {

using detail::json;
using kinematics::JointAngleState;
using kinematics::KinematicChain;
using predict::Mode;

// Stream ids for seeds derived from the master seed.
constexpr std::uint64_t kGpStream = 101;
constexpr std::uint64_t kIkStream = 102;
constexpr std::uint64_t kSuiteStream = 103;
constexpr std::uint64_t kPredictStream = 104;
constexpr std::uint64_t kTestIkOffset = 1'000'000;

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::kConfig, msg); }

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                const std::string& what) {
  if (!j.is_object()) config_error(what + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      config_error(what + ": unknown key '" + it.key() + "'");
    }
  }
}

template <typename T>
void read(const json& j, std::string_view key, T& out, const std::string& what) {
  auto it = j.find(std::string(key));
  if (it == j.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    config_error(what + "." + std::string(key) + " has the wrong type");
  }
}

template <typename T>
void read_opt(const json& j, std::string_view key, std::optional<T>& out, const std::string& what) {
  auto it = j.find(std::string(key));
  if (it == j.end() || it->is_null()) return;
  T v{};
  read(j, key, v, what);
  out = v;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::pair<double, double> read_range(const json& j, std::string_view key, const std::string& what) {
  auto it = j.find(std::string(key));
  if (it == j.end()) config_error(what + ": missing '" + std::string(key) + "'");
  if (it->is_number()) return {it->get<double>(), it->get<double>()};
  if (it->is_array() && it->size() == 2 && (*it)[0].is_number() && (*it)[1].is_number()) {
    return {(*it)[0].get<double>(), (*it)[1].get<double>()};
  }
  config_error(what + "." + std::string(key) + " must be a number or [min, max]");
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

JointPositions positions_map(const KinematicChain& chain, const Eigen::VectorXd& angles) {
  std::vector<Vec3> pos;
  kinematics::joint_positions(chain, angles, pos);
  JointPositions out;
  for (std::size_t j = 0; j < pos.size(); ++j) out[chain.joint_names()[j]] = pos[j];
  return out;
}

Eigen::VectorXd sinusoid_angles(const dataio::SynthConfig& cfg, double t) {
  Eigen::VectorXd a(static_cast<Eigen::Index>(cfg.angles.size()));
  for (std::size_t i = 0; i < cfg.angles.size(); ++i) {
    const auto& s = cfg.angles[i];
    a(static_cast<Eigen::Index>(i)) =
        s.center + s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency * t + s.phase);
  }
  return a;
}

double lowest_end_joint(const KinematicChain& chain, const std::vector<JointAngleState>& truth) {
  double low = std::numeric_limits<double>::infinity();
  const std::size_t end = chain.position_index(chain.end_joint());
  std::vector<Vec3> pos;
  for (const auto& s : truth) {
    kinematics::joint_positions(chain, s.angles, pos);
    low = std::min(low, pos[end].z());
  }
  return low;
}

scene::SceneConstraints case_scene(const scene::SceneConstraints& base, const SuiteConfig& suite,
                                   const KinematicChain& chain,
                                   const std::vector<JointAngleState>& truth) {
  scene::SceneConstraints s = base;
  if (suite.table_clearance >= 0.0) {
    s.boxes.push_back(scene::table_plane(lowest_end_joint(chain, truth) - suite.table_clearance));
  }
  return s;
}

dataio::ObservedSequence single_sequence(const dataio::TrajectoryFile& file) {
  auto loaded = dataio::to_sequences(file);
  if (loaded.sequences.size() != 1) {
    throw Error(ErrorCode::kValidation, "synthetic trajectory split unexpectedly");
  }
  return std::move(loaded.sequences.front());
}

std::string set_dir_name(const std::string& action) {
  if (action.empty()) return "all";
  std::string out = "action_";
  for (char c : action) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    out += ok ? c : '_';
  }
  return out;
}

const char* coord_name(std::size_t c) { return c == 0 ? "x" : (c == 1 ? "y" : "z"); }

std::vector<std::vector<Vec3>> track_of(const std::vector<JointPositions>& frames,
                                        const std::vector<std::string>& names) {
  std::vector<std::vector<Vec3>> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    std::vector<Vec3> row;
    row.reserve(names.size());
    for (const auto& n : names) {
      auto it = f.find(n);
      if (it == f.end()) throw Error(ErrorCode::kValidation, "frame lacks joint '" + n + "'");
      row.push_back(it->second);
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::size_t check_cloud_invariants(const predict::PredictionResult& result,
                                   const KinematicChain& chain,
                                   const scene::SceneConstraints& scene,
                                   predict::RejectionScope scope) {
  const std::size_t end = chain.position_index(chain.end_joint());
  std::size_t bad = 0;
  const bool constrained = result.mode == Mode::kConstrained;
  for (std::size_t s = 0; s < result.clouds.size(); ++s) {
    const auto& cloud = result.clouds[s];
    if (std::abs(cloud.weights.sum() - 1.0) > 1e-9) ++bad;
    if (!constrained || cloud.degraded) continue;
    const auto& specs = result.specs[s];
    for (Eigen::Index i = 0; i < cloud.angles.cols(); ++i) {
      for (std::size_t a = 0; a < specs.size(); ++a) {
        const auto aa = static_cast<Eigen::Index>(a);
        const double v = cloud.angles(aa, i);
        if (v < specs[a].lb || v > specs[a].ub || v < chain.angle_lb()(aa) ||
            v > chain.angle_ub()(aa)) {
          ++bad;
        }
      }
    }
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (std::size_t j = 0; j < cloud.joints.size(); ++j) {
        if (scope == predict::RejectionScope::kEndJointOnly && j != end) continue;
        if (!scene::admits(scene, cloud.position(i, j), cloud.t)) ++bad;
      }
    }
  }
  return bad;
}

std::string format_summary_line(const metrics::EvaluationReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << r.mode << ": MPJPE " << r.mpjpe_mm.mean << " +/- " << r.mpjpe_mm.std_error
     << " mm, NLL " << r.nll.mean << " +/- " << r.nll.std_error;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------- config

std::size_t RunConfig::lag_order() const {
  if (gp.lag_order > 0) return gp.lag_order;
  return static_cast<std::size_t>(std::llround(prediction.observed_window / prediction.dt)) + 1;
}

fs::path RunConfig::resolved_models_dir() const {
  return models_dir ? *models_dir : output_dir / "models";
}

std::uint64_t RunConfig::gp_seed() const { return gp.seed ? *gp.seed : derive_seed(seed, kGpStream); }
std::uint64_t RunConfig::ik_seed() const {
  return ik_seed_override ? *ik_seed_override : derive_seed(seed, kIkStream);
}
std::uint64_t RunConfig::suite_seed() const {
  return synthetic && synthetic->seed ? *synthetic->seed : derive_seed(seed, kSuiteStream);
}
std::uint64_t RunConfig::prediction_seed() const { return derive_seed(seed, kPredictStream); }

void RunConfig::validate() const {
  prediction.validate();
  ik.validate();
  if (gp.inducing == 0) config_error("gp.inducing must be >= 1");
  if (gp.max_iterations == 0) config_error("gp.max_iterations must be >= 1");
  if (lag_order() == 0) config_error("lag order must be >= 1");
  if (evaluate.repetitions == 0) config_error("evaluate.repetitions must be >= 1");
  if (!(evaluate.window_stride > 0.0)) config_error("evaluate.window_stride must be > 0");
  if (evaluate.grid_res < 4) config_error("evaluate.grid_res must be >= 4");
  if (evaluate.modes.empty()) config_error("evaluate.modes must not be empty");
  if (synthetic) {
    const auto& s = *synthetic;
    if (s.train_trajectories == 0 || s.test_trajectories == 0) {
      config_error("synthetic: need at least one train and one test trajectory");
    }
    if (!(s.duration > 0.0) || !(s.rate_hz > 0.0) || !(s.noise_sigma >= 0.0)) {
      config_error("synthetic: duration, rate_hz must be > 0 and noise_sigma >= 0");
    }
    for (std::size_t i = 0; i < s.angles.size(); ++i) {
      const auto& a = s.angles[i];
      if (a.amplitude_min < 0.0 || a.amplitude_max < a.amplitude_min || a.frequency_min < 0.0 ||
          a.frequency_max < a.frequency_min) {
        config_error("synthetic: angle " + std::to_string(i) + " has an invalid range");
      }
    }
  }
  auto require = [](const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw Error(ErrorCode::kIo, what + " not found: " + p.string());
  };
  if (chain_path) require(*chain_path, "chain file");
  if (scene_path) require(*scene_path, "scene file");
  for (const auto& p : train_files) require(p, "training file");
  for (const auto& p : test_files) require(p, "test file");
}

RunConfig parse_run_config(const std::string& json_text, const fs::path& base_dir) {
  const json j = detail::parse_json(json_text, "run config");
  check_keys(j, {"seed", "chain", "scene", "prediction", "gp", "ik", "data", "synthetic",
                 "evaluate", "output_dir", "models_dir"},
             "config");
  RunConfig cfg;
  read(j, "seed", cfg.seed, "config");
  if (j.contains("chain") && !j["chain"].is_null()) {
    cfg.chain_path = resolve(base_dir, j["chain"].get<std::string>());
  }
  if (j.contains("scene") && !j["scene"].is_null()) {
    cfg.scene_path = resolve(base_dir, j["scene"].get<std::string>());
  }
  if (j.contains("prediction")) {
    const json& p = j["prediction"];
    check_keys(p, {"observed_window", "horizon", "dt", "mc_samples", "mode", "rejection",
                   "start_time"},
               "prediction");
    auto& pc = cfg.prediction;
    read(p, "observed_window", pc.observed_window, "prediction");
    read(p, "horizon", pc.horizon, "prediction");
    read(p, "dt", pc.dt, "prediction");
    read(p, "mc_samples", pc.mc_samples, "prediction");
    if (p.contains("mode")) pc.mode = predict::parse_mode(p["mode"].get<std::string>());
    if (p.contains("rejection")) {
      const auto r = p["rejection"].get<std::string>();
      if (r == "all") {
        pc.rejection = predict::RejectionScope::kAllJoints;
      } else if (r == "end_joint") {
        pc.rejection = predict::RejectionScope::kEndJointOnly;
      } else {
        config_error("prediction.rejection must be 'all' or 'end_joint'");
      }
    }
    read_opt(p, "start_time", cfg.predict_start, "prediction");
  }
  if (j.contains("gp")) {
    const json& g = j["gp"];
    check_keys(g, {"lag_order", "inducing", "max_iterations", "tolerance", "optimize_inducing",
                   "seed"},
               "gp");
    read(g, "lag_order", cfg.gp.lag_order, "gp");
    read(g, "inducing", cfg.gp.inducing, "gp");
    read(g, "max_iterations", cfg.gp.max_iterations, "gp");
    read(g, "tolerance", cfg.gp.tolerance, "gp");
    read(g, "optimize_inducing", cfg.gp.optimize_inducing, "gp");
    read_opt(g, "seed", cfg.gp.seed, "gp");
  }
  if (j.contains("ik")) {
    const json& k = j["ik"];
    check_keys(k, {"swarm_size", "iterations", "inertia", "cognitive", "social", "tolerance",
                   "stall_iterations", "restarts", "seed"},
               "ik");
    read(k, "swarm_size", cfg.ik.swarm_size, "ik");
    read(k, "iterations", cfg.ik.iterations, "ik");
    read(k, "inertia", cfg.ik.inertia, "ik");
    read(k, "cognitive", cfg.ik.cognitive, "ik");
    read(k, "social", cfg.ik.social, "ik");
    read(k, "tolerance", cfg.ik.tolerance, "ik");
    read(k, "stall_iterations", cfg.ik.stall_iterations, "ik");
    read(k, "restarts", cfg.ik.restarts, "ik");
    read_opt(k, "seed", cfg.ik_seed_override, "ik");
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, {"train", "test"}, "data");
    for (const char* key : {"train", "test"}) {
      if (!d.contains(key)) continue;
      if (!d[key].is_array()) config_error(std::string("data.") + key + " must be a list");
      auto& dst = std::string(key) == "train" ? cfg.train_files : cfg.test_files;
      for (const auto& item : d[key]) dst.push_back(resolve(base_dir, item.get<std::string>()));
    }
  }
  if (j.contains("synthetic")) {
    const json& s = j["synthetic"];
    check_keys(s, {"train_trajectories", "test_trajectories", "duration", "rate_hz",
                   "noise_sigma", "table_clearance", "angles", "seed"},
               "synthetic");
    SuiteConfig suite;
    read(s, "train_trajectories", suite.train_trajectories, "synthetic");
    read(s, "test_trajectories", suite.test_trajectories, "synthetic");
    read(s, "duration", suite.duration, "synthetic");
    read(s, "rate_hz", suite.rate_hz, "synthetic");
    read(s, "noise_sigma", suite.noise_sigma, "synthetic");
    read(s, "table_clearance", suite.table_clearance, "synthetic");
    read_opt(s, "seed", suite.seed, "synthetic");
    if (s.contains("angles")) {
      if (!s["angles"].is_array()) config_error("synthetic.angles must be a list");
      for (const auto& a : s["angles"]) {
        check_keys(a, {"center", "amplitude", "frequency"}, "synthetic.angles[]");
        AngleFamily f;
        read(a, "center", f.center, "synthetic.angles[]");
        std::tie(f.amplitude_min, f.amplitude_max) = read_range(a, "amplitude", "synthetic.angles[]");
        std::tie(f.frequency_min, f.frequency_max) = read_range(a, "frequency", "synthetic.angles[]");
        suite.angles.push_back(f);
      }
    }
    cfg.synthetic = suite;
  }
  if (j.contains("evaluate")) {
    const json& e = j["evaluate"];
    check_keys(e, {"repetitions", "window_stride", "grid_res", "threads", "modes"}, "evaluate");
    read(e, "repetitions", cfg.evaluate.repetitions, "evaluate");
    read(e, "window_stride", cfg.evaluate.window_stride, "evaluate");
    read(e, "grid_res", cfg.evaluate.grid_res, "evaluate");
    read(e, "threads", cfg.evaluate.threads, "evaluate");
    if (e.contains("modes")) {
      cfg.evaluate.modes.clear();
      for (const auto& m : e["modes"]) cfg.evaluate.modes.push_back(predict::parse_mode(m.get<std::string>()));
    }
  }
  cfg.output_dir = resolve(base_dir, j.contains("output_dir") ? j["output_dir"].get<std::string>()
                                                             : cfg.output_dir.string());
  if (j.contains("models_dir") && !j["models_dir"].is_null()) {
    cfg.models_dir = resolve(base_dir, j["models_dir"].get<std::string>());
  }
  if (cfg.train_files.empty() && cfg.test_files.empty() && !cfg.synthetic) {
    cfg.synthetic = SuiteConfig{};
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorCode::kIo, "config not found: " + path.string());
  try {
    return parse_run_config(detail::read_text_file(path), path.parent_path());
  } catch (const json::exception& e) {
    config_error(path.string() + ": " + e.what());
  }
}

KinematicChain load_chain_for(const RunConfig& cfg) {
  return cfg.chain_path ? kinematics::load_chain(*cfg.chain_path) : KinematicChain::default_arm();
}

scene::SceneConstraints load_scene_for(const RunConfig& cfg) {
  return cfg.scene_path ? scene::load_scene(*cfg.scene_path) : scene::SceneConstraints{};
}

std::size_t worker_count(std::size_t configured) {
  std::size_t n = configured;
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CPDP_THREADS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (*end != '\0' || cap < 1) config_error("CPDP_THREADS must be a positive integer");
    n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

// ---------------------------------------------------------------- datasets

std::vector<AngleFamily> default_family(const KinematicChain& chain) {
  // Each angle sweeps most of its range around the midpoint; the last angle
  // is pushed towards its lower stop.
  std::vector<AngleFamily> out;
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double lb = chain.angle_lb()(ii);
    const double ub = chain.angle_ub()(ii);
    AngleFamily f;
    const double half = 0.5 * (ub - lb);
    if (i + 1 == chain.dof()) {
      f.center = lb + 0.45 * (ub - lb);
      f.amplitude_min = 0.35 * (ub - lb);
      f.amplitude_max = 0.43 * (ub - lb);
    } else {
      f.center = 0.5 * (lb + ub);
      f.amplitude_min = 0.3 * half;
      f.amplitude_max = 0.6 * half;
    }
    f.frequency_min = 0.2;
    f.frequency_max = 0.5;
    out.push_back(f);
  }
  return out;
}

std::vector<dataio::SynthConfig> suite_configs(const SuiteConfig& suite,
                                               const KinematicChain& chain, std::uint64_t seed,
                                               int stream) {
  const auto family = suite.angles.empty() ? default_family(chain) : suite.angles;
  if (family.size() != chain.dof()) {
    config_error("synthetic: need one angle family per angle (" + std::to_string(chain.dof()) + ")");
  }
  const std::size_t count = stream == 0 ? suite.train_trajectories : suite.test_trajectories;
  const std::uint64_t base = derive_seed(seed, static_cast<std::uint64_t>(stream));
  std::vector<dataio::SynthConfig> out;
  for (std::size_t t = 0; t < count; ++t) {
    Rng rng(derive_seed(base, t));
    dataio::SynthConfig cfg;
    cfg.duration = suite.duration;
    cfg.rate_hz = suite.rate_hz;
    cfg.noise_sigma = suite.noise_sigma;
    for (std::size_t i = 0; i < family.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto& f = family[i];
      dataio::Sinusoid s;
      s.center = f.center;
      s.amplitude = rng.uniform(f.amplitude_min, f.amplitude_max);
      s.frequency = rng.uniform(f.frequency_min, f.frequency_max);
      s.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double room = std::min(s.center - chain.angle_lb()(ii), chain.angle_ub()(ii) - s.center);
      if (room < 0.0) {
        config_error("synthetic: angle " + std::to_string(i) + " centre lies outside its bounds");
      }
      s.amplitude = std::min(s.amplitude, room);
      if (s.frequency > 0.0) {
        s.amplitude = std::min(s.amplitude,
                               0.98 * chain.vel_ub()(ii) / (2.0 * std::numbers::pi * s.frequency));
      }
      cfg.angles.push_back(s);
    }
    cfg.seed = rng.next();
    cfg.subject = "synthetic";
    out.push_back(std::move(cfg));
  }
  return out;
}

Dataset synthetic_dataset(const SuiteConfig& suite, const KinematicChain& chain,
                          const scene::SceneConstraints& base_scene, double dt,
                          std::uint64_t seed) {
  Dataset data;
  for (const auto& cfg : suite_configs(suite, chain, seed, 0)) {
    const auto synth = dataio::generate_synthetic(cfg, chain);
    data.train.push_back(dataio::resample(single_sequence(synth.file), 1.0 / dt));
  }
  std::size_t index = 0;
  for (const auto& cfg : suite_configs(suite, chain, seed, 1)) {
    const auto synth = dataio::generate_synthetic(cfg, chain);
    TestCase tc;
    tc.name = "test_" + std::to_string(index++);
    tc.observed = dataio::resample(single_sequence(synth.file), 1.0 / dt);
    for (const auto& f : tc.observed.frames) {
      tc.truth.push_back(positions_map(chain, sinusoid_angles(cfg, f.t)));
    }
    tc.scene = case_scene(base_scene, suite, chain, synth.truth);
    data.test.push_back(std::move(tc));
  }
  return data;
}

Dataset load_dataset(const RunConfig& cfg, const KinematicChain& chain,
                     const scene::SceneConstraints& scene) {
  if (cfg.synthetic && cfg.train_files.empty() && cfg.test_files.empty()) {
    return synthetic_dataset(*cfg.synthetic, chain, scene, cfg.prediction.dt, cfg.suite_seed());
  }
  Dataset data;
  const double rate = 1.0 / cfg.prediction.dt;
  for (const auto& path : cfg.train_files) {
    auto loaded = dataio::load_trajectory(path);
    data.dropped_frames += loaded.dropped_frames;
    for (auto& seq : loaded.sequences) {
      if (seq.size() >= 2) data.train.push_back(dataio::resample(seq, rate));
    }
  }
  for (const auto& path : cfg.test_files) {
    auto loaded = dataio::load_trajectory(path);
    data.dropped_frames += loaded.dropped_frames;
    for (std::size_t i = 0; i < loaded.sequences.size(); ++i) {
      if (loaded.sequences[i].size() < 2) continue;
      TestCase tc;
      tc.name = path.stem().string() + "#" + std::to_string(i);
      tc.observed = dataio::resample(loaded.sequences[i], rate);
      tc.action = tc.observed.action;
      for (const auto& f : tc.observed.frames) tc.truth.push_back(f.joints);
      tc.scene = scene;
      data.test.push_back(std::move(tc));
    }
  }
  return data;
}

// ---------------------------------------------------------------- models

const predict::ModelSet& ModelLibrary::for_action(const std::string& action) const {
  auto it = sets.find(action);
  if (it != sets.end()) return it->second;
  it = sets.find("");
  if (it == sets.end()) throw_invalid("model library has no default set");
  return it->second;
}

ModelLibrary fit_library(const std::vector<dataio::ObservedSequence>& train,
                         const KinematicChain& chain, const RunConfig& cfg,
                         const FitSettings& settings) {
  if (train.empty()) throw Error(ErrorCode::kEmptyDataset, "no training sequences");
  const std::size_t k = cfg.lag_order();
  const auto& names = chain.joint_names();

  // IK once per training sequence.
  std::vector<std::vector<JointAngleState>> angles(train.size());
  if (settings.angles) {
    parallel_for(train.size(), settings.threads, [&](std::size_t i) {
      ik::PsoConfig pso = cfg.ik;
      pso.seed = derive_seed(cfg.ik_seed(), i);
      angles[i] = ik::states_of(ik::solve_trajectory(train[i].frames, chain, pso));
    });
  }

  std::vector<std::string> groups = {""};
  std::set<std::string> labels;
  for (const auto& s : train) {
    if (!s.action.empty()) labels.insert(s.action);
  }
  groups.insert(groups.end(), labels.begin(), labels.end());

  struct Job {
    std::size_t group;
    std::string joint;  // empty for angle models
    std::size_t index;  // angle or coordinate
    std::vector<std::vector<double>> series;
  };
  std::vector<Job> jobs;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto member = [&](std::size_t s) { return groups[g].empty() || train[s].action == groups[g]; };
    if (settings.angles) {
      for (std::size_t a = 0; a < chain.dof(); ++a) {
        Job job{g, "", a, {}};
        for (std::size_t s = 0; s < train.size(); ++s) {
          if (!member(s)) continue;
          std::vector<double> series;
          for (const auto& st : angles[s]) series.push_back(st.angles(static_cast<Eigen::Index>(a)));
          job.series.push_back(std::move(series));
        }
        jobs.push_back(std::move(job));
      }
    }
    if (settings.task_space) {
      for (const auto& name : names) {
        for (std::size_t c = 0; c < 3; ++c) {
          Job job{g, name, c, {}};
          for (std::size_t s = 0; s < train.size(); ++s) {
            if (!member(s)) continue;
            std::vector<double> series;
            for (const auto& f : train[s].frames) {
              auto it = f.joints.find(name);
              if (it == f.joints.end()) {
                throw Error(ErrorCode::kValidation, "training data lacks joint '" + name + "'");
              }
              series.push_back(it->second(static_cast<Eigen::Index>(c)));
            }
            job.series.push_back(std::move(series));
          }
          jobs.push_back(std::move(job));
        }
      }
    }
  }

  std::vector<std::optional<gp::GpModel>> fitted(jobs.size());
  parallel_for(jobs.size(), settings.threads, [&](std::size_t i) {
    const auto data = gp::build_lagged(jobs[i].series, k);
    gp::FitOptions opts;
    opts.inducing = std::min(cfg.gp.inducing, data.rows());
    opts.seed = derive_seed(cfg.gp_seed(), i);
    opts.max_iterations = cfg.gp.max_iterations;
    opts.tolerance = cfg.gp.tolerance;
    opts.optimize_inducing = cfg.gp.optimize_inducing;
    fitted[i] = gp::fit(data, opts);
  });

  ModelLibrary lib;
  lib.lag_order = k;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto& set = lib.sets[groups[jobs[i].group]];
    if (jobs[i].joint.empty()) {
      set.angles.push_back(std::move(*fitted[i]));
    } else {
      set.xyz[jobs[i].joint].push_back(std::move(*fitted[i]));
    }
  }
  return lib;
}

void save_library(const ModelLibrary& lib, const fs::path& dir) {
  json manifest;
  manifest["format"] = "cpdp-models-1";
  manifest["lag_order"] = lib.lag_order;
  manifest["sets"] = json::array();
  for (const auto& [action, set] : lib.sets) {
    const std::string sub = set_dir_name(action);
    json entry;
    entry["action"] = action;
    entry["dir"] = sub;
    entry["angles"] = set.angles.size();
    entry["joints"] = json::array();
    for (std::size_t i = 0; i < set.angles.size(); ++i) {
      gp::save_model(set.angles[i], dir / sub / ("angle_" + std::to_string(i) + ".json"));
    }
    for (const auto& [joint, models] : set.xyz) {
      entry["joints"].push_back(joint);
      for (std::size_t c = 0; c < models.size(); ++c) {
        gp::save_model(models[c], dir / sub / ("xyz_" + joint + "_" + coord_name(c) + ".json"));
      }
    }
    manifest["sets"].push_back(entry);
  }
  detail::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

ModelLibrary load_library(const fs::path& dir) {
  const json m = detail::parse_json(detail::read_text_file(dir / "manifest.json"), "model manifest");
  if (m.value("format", "") != "cpdp-models-1") {
    throw Error(ErrorCode::kParse, "model manifest: unsupported format");
  }
  ModelLibrary lib;
  lib.lag_order = detail::get_field<std::size_t>(m, "lag_order", "model manifest");
  for (const auto& entry : detail::get_field<json>(m, "sets", "model manifest")) {
    predict::ModelSet set;
    const auto sub = detail::get_field<std::string>(entry, "dir", "model manifest");
    const auto n_angles = detail::get_field<std::size_t>(entry, "angles", "model manifest");
    for (std::size_t i = 0; i < n_angles; ++i) {
      set.angles.push_back(gp::load_model(dir / sub / ("angle_" + std::to_string(i) + ".json")));
    }
    for (const auto& joint : detail::get_field<std::vector<std::string>>(entry, "joints", "model manifest")) {
      auto& models = set.xyz[joint];
      for (std::size_t c = 0; c < 3; ++c) {
        models.push_back(gp::load_model(dir / sub / ("xyz_" + joint + "_" + coord_name(c) + ".json")));
      }
    }
    for (const auto& model : set.angles) {
      if (model.lag_order() != lib.lag_order) {
        throw Error(ErrorCode::kValidation, "model manifest: lag order mismatch");
      }
    }
    lib.sets[detail::get_field<std::string>(entry, "action", "model manifest")] = std::move(set);
  }
  return lib;
}

// ---------------------------------------------------------------- evaluate

EvaluationOutput evaluate(const Dataset& data, const ModelLibrary& lib,
                          const KinematicChain& chain, const RunConfig& cfg) {
  const std::size_t k = lib.lag_order;
  const std::size_t steps = cfg.prediction.steps();
  const auto stride = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.evaluate.window_stride / cfg.prediction.dt)));
  const auto& names = chain.joint_names();
  const std::size_t end_joint = chain.position_index(chain.end_joint());
  const std::size_t threads = worker_count(cfg.evaluate.threads);
  const auto& modes = cfg.evaluate.modes;
  const bool need_angles = std::any_of(modes.begin(), modes.end(),
                                       [](Mode m) { return m != Mode::kTaskSpaceGp; });

  struct Window {
    std::size_t test_case;
    std::size_t end;  // index of the last observed frame
  };
  std::vector<Window> windows;
  for (std::size_t c = 0; c < data.test.size(); ++c) {
    const std::size_t n = data.test[c].observed.size();
    for (std::size_t e = k - 1; e + steps < n; e += stride) windows.push_back({c, e});
  }
  if (windows.empty()) {
    throw Error(ErrorCode::kEmptyDataset, "test data too short for any evaluation window");
  }

  std::vector<std::vector<JointAngleState>> test_angles(data.test.size());
  if (need_angles) {
    parallel_for(data.test.size(), threads, [&](std::size_t c) {
      ik::PsoConfig pso = cfg.ik;
      pso.seed = derive_seed(cfg.ik_seed(), kTestIkOffset + c);
      test_angles[c] = ik::states_of(ik::solve_trajectory(data.test[c].observed.frames, chain, pso));
    });
  }

  // Ground truth and zero-order-hold baseline per window.
  std::vector<metrics::PositionTrack> truth(windows.size());
  std::vector<double> zoh(windows.size());
  EvaluationOutput out;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& tc = data.test[windows[w].test_case];
    const std::size_t e = windows[w].end;
    truth[w] = track_of({tc.truth.begin() + static_cast<std::ptrdiff_t>(e + 1),
                         tc.truth.begin() + static_cast<std::ptrdiff_t>(e + 1 + steps)},
                        names);
    const auto last = track_of({tc.observed.frames[e].joints}, names).front();
    zoh[w] = metrics::mpjpe(truth[w], metrics::PositionTrack(steps, last));
    out.window_actions.push_back(tc.action);
  }
  out.baseline_mpjpe = metrics::summarize(zoh);

  const std::size_t reps = cfg.evaluate.repetitions;
  // [mode][rep][window]
  std::vector<std::vector<std::vector<double>>> err(
      modes.size(), std::vector<std::vector<double>>(reps, std::vector<double>(windows.size())));
  auto nll = err;
  std::vector<std::size_t> degraded(reps, 0), violations(reps, 0);

  parallel_for(reps, threads, [&](std::size_t r) {
    const std::uint64_t rep_seed = derive_seed(cfg.prediction_seed(), r);
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const auto& tc = data.test[windows[w].test_case];
      const std::size_t e = windows[w].end;
      const auto& models = lib.for_action(tc.action);
      std::vector<Vec3> truth_end;
      for (const auto& row : truth[w]) truth_end.push_back(row[end_joint]);
      for (std::size_t m = 0; m < modes.size(); ++m) {
        predict::PredictionConfig pc = cfg.prediction;
        pc.mode = modes[m];
        pc.seed = derive_seed(rep_seed, w);
        predict::PredictionResult result;
        if (pc.mode == Mode::kTaskSpaceGp) {
          const std::vector<PoseFrame> obs(
              tc.observed.frames.begin() + static_cast<std::ptrdiff_t>(e + 1 - k),
              tc.observed.frames.begin() + static_cast<std::ptrdiff_t>(e + 1));
          result = predict::predict_task_space(obs, models, chain, pc);
        } else {
          const auto& ang = test_angles[windows[w].test_case];
          const std::vector<JointAngleState> obs(ang.begin() + static_cast<std::ptrdiff_t>(e + 1 - k),
                                                 ang.begin() + static_cast<std::ptrdiff_t>(e + 1));
          result = predict::predict_from_angles(obs, models, chain, tc.scene, pc);
        }
        degraded[r] += result.degraded_steps;
        violations[r] += check_cloud_invariants(result, chain, tc.scene, cfg.prediction.rejection);
        err[m][r][w] = metrics::mpjpe(truth[w], track_of(result.mean_trajectory, names));
        nll[m][r][w] = metrics::nll(truth_end, result.clouds, end_joint, cfg.evaluate.grid_res);
      }
    }
  });

  std::set<std::string> labels;
  for (const auto& a : out.window_actions) {
    if (!a.empty()) labels.insert(a);
  }
  auto mean_over = [&](const std::vector<double>& v, const std::string& label) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t w = 0; w < v.size(); ++w) {
      if (!label.empty() && out.window_actions[w] != label) continue;
      sum += v[w];
      ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
  };

  for (std::size_t m = 0; m < modes.size(); ++m) {
    metrics::EvaluationReport rep;
    rep.mode = std::string(predict::mode_label(modes[m]));
    rep.n_windows = windows.size();
    rep.nll_per_window = nll[m];
    for (std::size_t r = 0; r < reps; ++r) {
      rep.mpjpe_per_repetition.push_back(mean_over(err[m][r], ""));
      rep.nll_per_repetition.push_back(mean_over(nll[m][r], ""));
    }
    rep.mpjpe_mm = metrics::summarize(rep.mpjpe_per_repetition);
    rep.nll = metrics::summarize(rep.nll_per_repetition);
    for (const auto& label : labels) {
      std::vector<double> e_r, n_r;
      for (std::size_t r = 0; r < reps; ++r) {
        e_r.push_back(mean_over(err[m][r], label));
        n_r.push_back(mean_over(nll[m][r], label));
      }
      metrics::ActionStats stats;
      stats.mpjpe_mm = metrics::summarize(e_r);
      stats.nll = metrics::summarize(n_r);
      stats.n_windows = static_cast<std::size_t>(
          std::count(out.window_actions.begin(), out.window_actions.end(), label));
      rep.per_action[label] = stats;
    }
    out.reports.push_back(std::move(rep));
  }
  for (std::size_t r = 0; r < reps; ++r) {
    out.degraded_steps += degraded[r];
    out.invariant_violations += violations[r];
  }
  return out;
}

// ---------------------------------------------------------------- commands

std::string run_synth(const RunConfig& cfg) {
  cfg.validate();
  const auto chain = load_chain_for(cfg);
  const auto base_scene = load_scene_for(cfg);
  const SuiteConfig suite = cfg.synthetic ? *cfg.synthetic : SuiteConfig{};
  const fs::path dir = cfg.output_dir / "synth";
  json manifest;
  manifest["train"] = json::array();
  manifest["test"] = json::array();
  const auto train = suite_configs(suite, chain, cfg.suite_seed(), 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto synth = dataio::generate_synthetic(train[i], chain);
    const std::string name = "train_" + std::to_string(i) + ".csv";
    dataio::save_trajectory(synth.file, dir / name);
    manifest["train"].push_back(name);
  }
  const auto test = suite_configs(suite, chain, cfg.suite_seed(), 1);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto synth = dataio::generate_synthetic(test[i], chain);
    const std::string stem = "test_" + std::to_string(i);
    dataio::save_trajectory(synth.file, dir / (stem + ".csv"));
    detail::write_text_file(dir / (stem + "_angles.csv"), dataio::format_angles(synth.truth));
    detail::write_text_file(dir / (stem + "_scene.json"),
                            scene::scene_to_json(case_scene(base_scene, suite, chain, synth.truth)));
    manifest["test"].push_back(stem + ".csv");
  }
  detail::write_text_file(dir / "suite.json", manifest.dump(2) + "\n");
  return "wrote " + std::to_string(train.size()) + " training and " +
         std::to_string(test.size()) + " test trajectories to " + dir.string();
}

namespace {

std::size_t count_models(const ModelLibrary& lib) {
  std::size_t n = 0;
  for (const auto& [label, set] : lib.sets) {
    n += set.angles.size();
    for (const auto& [joint, models] : set.xyz) n += models.size();
  }
  return n;
}

ModelLibrary obtain_library(const RunConfig& cfg, const Dataset& data,
                            const KinematicChain& chain, bool prefer_saved) {
  const fs::path dir = cfg.resolved_models_dir();
  if (prefer_saved && fs::exists(dir / "manifest.json")) return load_library(dir);
  FitSettings settings;
  settings.threads = worker_count(cfg.evaluate.threads);
  auto lib = fit_library(data.train, chain, cfg, settings);
  save_library(lib, dir);
  return lib;
}

}  // namespace

std::string run_fit(const RunConfig& cfg) {
  cfg.validate();
  const auto chain = load_chain_for(cfg);
  const auto data = load_dataset(cfg, chain, load_scene_for(cfg));
  FitSettings settings;
  settings.threads = worker_count(cfg.evaluate.threads);
  const auto lib = fit_library(data.train, chain, cfg, settings);
  const fs::path dir = cfg.resolved_models_dir();
  save_library(lib, dir);
  return "fitted " + std::to_string(count_models(lib)) + " models (lag order " +
         std::to_string(lib.lag_order) + ", " + std::to_string(lib.sets.size()) +
         " set(s)) from " + std::to_string(data.train.size()) + " sequences into " + dir.string();
}

std::string run_predict(const RunConfig& cfg) {
  cfg.validate();
  const auto chain = load_chain_for(cfg);
  const auto data = load_dataset(cfg, chain, load_scene_for(cfg));
  if (data.test.empty()) throw Error(ErrorCode::kEmptyDataset, "no test sequence to predict on");
  const auto lib = obtain_library(cfg, data, chain, true);
  const auto& tc = data.test.front();
  const std::size_t k = lib.lag_order;
  const std::size_t steps = cfg.prediction.steps();
  const std::size_t n = tc.observed.size();
  if (n < k) throw Error(ErrorCode::kEmptyDataset, "test sequence shorter than the lag order");

  std::size_t end = n > steps + 1 ? (n - 1 - steps) / 2 : n - 1;
  if (cfg.predict_start) {
    const double t0 = tc.observed.frames.front().t;
    const auto idx = std::llround((*cfg.predict_start - t0) / cfg.prediction.dt);
    end = static_cast<std::size_t>(std::clamp<long long>(idx, 0, static_cast<long long>(n - 1)));
  }
  end = std::max(end, k - 1);

  dataio::ObservedSequence obs;
  obs.action = tc.action;
  obs.frames.assign(tc.observed.frames.begin(),
                    tc.observed.frames.begin() + static_cast<std::ptrdiff_t>(end + 1));
  predict::PredictionConfig pc = cfg.prediction;
  pc.seed = cfg.prediction_seed();
  ik::PsoConfig pso = cfg.ik;
  pso.seed = cfg.ik_seed();
  const auto result = predict::predict_horizon(obs, lib.for_action(tc.action), chain, tc.scene, pc, pso);
  if (check_cloud_invariants(result, chain, tc.scene, cfg.prediction.rejection) > 0) {
    throw Error(ErrorCode::kValidation, "prediction violated its bound or scene invariants");
  }

  const fs::path dir = cfg.output_dir;
  detail::write_text_file(dir / "clouds.csv", predict::format_clouds_csv(result, chain.dof()));
  detail::write_text_file(dir / "mean_trajectory.csv", predict::format_mean_trajectory_csv(result));

  std::ostringstream summary;
  summary << "predicted " << result.clouds.size() << " steps (" << predict::mode_label(pc.mode)
          << ") after t=" << obs.frames.back().t << " on " << tc.name;
  if (end + steps < n) {
    const auto& names = chain.joint_names();
    const auto truth = track_of({tc.truth.begin() + static_cast<std::ptrdiff_t>(end + 1),
                                 tc.truth.begin() + static_cast<std::ptrdiff_t>(end + 1 + steps)},
                                names);
    const auto last = track_of({obs.frames.back().joints}, names).front();
    const double err = metrics::mpjpe(truth, track_of(result.mean_trajectory, names));
    const double zoh = metrics::mpjpe(truth, metrics::PositionTrack(steps, last));
    const std::size_t end_joint = chain.position_index(chain.end_joint());
    std::vector<Vec3> truth_end;
    for (const auto& row : truth) truth_end.push_back(row[end_joint]);
    const double nll = metrics::nll(truth_end, result.clouds, end_joint, cfg.evaluate.grid_res);
    std::string csv = "mode,mpjpe_mm,zoh_mpjpe_mm,nll,degraded_steps\n";
    csv += std::string(predict::mode_label(pc.mode)) + ',';
    detail::append_fixed(csv, err, 6);
    csv += ',';
    detail::append_fixed(csv, zoh, 6);
    csv += ',';
    detail::append_fixed(csv, nll, 6);
    csv += ',' + std::to_string(result.degraded_steps) + '\n';
    detail::write_text_file(dir / "predict_metrics.csv", csv);
    summary.setf(std::ios::fixed);
    summary.precision(2);
    summary << "; MPJPE " << err << " mm (zero-order hold " << zoh << " mm), NLL " << nll;
  }
  return summary.str();
}

std::string run_evaluate(const RunConfig& cfg) {
  cfg.validate();
  const auto chain = load_chain_for(cfg);
  const auto data = load_dataset(cfg, chain, load_scene_for(cfg));
  const auto lib = obtain_library(cfg, data, chain, cfg.models_dir.has_value());
  const auto result = evaluate(data, lib, chain, cfg);

  const fs::path dir = cfg.output_dir;
  detail::write_text_file(dir / "report.csv", metrics::format_report_csv(result.reports));
  detail::write_text_file(dir / "nll_windows.csv",
                          metrics::format_window_nll_csv(result.reports, result.window_actions));
  std::string baseline = "method,mpjpe_mm,mpjpe_stderr,n_windows\nzoh,";
  detail::append_fixed(baseline, result.baseline_mpjpe.mean, 6);
  baseline += ',';
  detail::append_fixed(baseline, result.baseline_mpjpe.std_error, 6);
  baseline += ',' + std::to_string(result.window_actions.size()) + '\n';
  detail::write_text_file(dir / "baseline.csv", baseline);

  if (result.invariant_violations > 0) {
    throw Error(ErrorCode::kValidation, std::to_string(result.invariant_violations) +
                                            " samples violated bound or scene invariants");
  }
  std::ostringstream summary;
  summary << "evaluated " << result.window_actions.size() << " windows x "
          << cfg.evaluate.repetitions << " repetitions\n";
  for (const auto& r : result.reports) summary << "  " << format_summary_line(r) << "\n";
  summary.setf(std::ios::fixed);
  summary.precision(2);
  summary << "  zero-order hold: MPJPE " << result.baseline_mpjpe.mean << " mm";
  if (result.degraded_steps > 0) summary << "\n  degraded steps: " << result.degraded_steps;
  return summary.str();
}

}  // namespace cpdp::harness
