#include <cmath>
#include <numbers>

#include <benchmark/benchmark.h>

#include "cpdp/distributions.hpp"
#include "cpdp/gp_regression.hpp"
#include "cpdp/kinematics.hpp"
#include "cpdp/predictor.hpp"

namespace {

using namespace cpdp;

// A few phase-shifted sinusoids around `center`, sampled at 10 Hz.
std::vector<std::vector<double>> sinusoids(double center, double amplitude, int count, int length) {
  std::vector<std::vector<double>> seqs;
  for (int k = 0; k < count; ++k) {
    std::vector<double> s;
    for (int i = 0; i < length; ++i) {
      s.push_back(center + amplitude * std::sin(2.0 * std::numbers::pi * (0.25 + 0.05 * k) * 0.1 * i + 0.7 * k));
    }
    seqs.push_back(std::move(s));
  }
  return seqs;
}

gp::GpModel fixed_model(double center, double amplitude) {
  const auto data = gp::build_lagged(sinusoids(center, amplitude, 4, 40), 3);
  gp::GpHyperparams hp;
  hp.lengthscales = Eigen::VectorXd::Constant(3, amplitude);
  hp.signal_var = amplitude * amplitude;
  hp.noise_var = 1e-4 * amplitude * amplitude;
  return gp::GpModel(hp, gp::select_inducing(data.inputs, 20, 3), data.inputs, data.outputs,
                     data.outputs.mean());
}

void BM_TruncatedNormalSample(benchmark::State& state) {
  const dist::TruncatedNormalSpec spec{0.2, 0.3, -0.1, 0.4};
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto x = dist::tn_sample(spec, n, 11);
    benchmark::DoNotOptimize(x.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TruncatedNormalSample)->Arg(10000);

void BM_GpPosterior(benchmark::State& state) {
  const auto model = fixed_model(0.0, 0.6);
  const std::vector<double> x = {0.1, 0.2, 0.3};
  for (auto _ : state) benchmark::DoNotOptimize(model.posterior(x).mean);
}
BENCHMARK(BM_GpPosterior);

void BM_GpFit(benchmark::State& state) {
  const auto data = gp::build_lagged(sinusoids(0.0, 0.6, 8, 60), 3);
  gp::FitOptions opt;
  opt.inducing = static_cast<std::size_t>(state.range(0));
  opt.max_iterations = 50;
  for (auto _ : state) {
    auto model = gp::fit(data, opt);
    benchmark::DoNotOptimize(model.hyper().signal_var);
  }
  state.SetLabel(std::to_string(data.rows()) + " points");
}
BENCHMARK(BM_GpFit)->Arg(20)->Arg(30)->Unit(benchmark::kMillisecond);

void BM_TransportAndFilter(benchmark::State& state) {
  const auto arm = kinematics::KinematicChain::default_arm();
  const std::vector<dist::TruncatedNormalSpec> specs = {
      {0.2, 0.1, 0.0, 0.4}, {0.1, 0.1, -0.1, 0.3}, {0.0, 0.3, -0.3, 0.3}, {1.3, 0.2, 1.0, 1.6}};
  scene::SceneConstraints sc;
  sc.boxes.push_back(scene::table_plane(-0.40));
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto cloud = predict::transport_and_filter(specs, arm, sc, 0.1, n, 5);
    benchmark::DoNotOptimize(cloud.weights.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TransportAndFilter)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_PredictFromAngles(benchmark::State& state) {
  const auto arm = kinematics::KinematicChain::default_arm();
  predict::ModelSet models;
  models.angles = {fixed_model(0.25, 0.1), fixed_model(0.15, 0.1), fixed_model(0.0, 0.6),
                   fixed_model(1.2, 0.4)};
  std::vector<kinematics::JointAngleState> history;
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd q(4);
    q << 0.25, 0.15, 0.1 * i, 1.2;
    history.push_back({q, 0.1 * i});
  }
  predict::PredictionConfig cfg;
  cfg.mc_samples = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto result = predict::predict_from_angles(history, models, arm, {}, cfg);
    benchmark::DoNotOptimize(result.clouds.data());
  }
  state.SetLabel("5 steps");
}
BENCHMARK(BM_PredictFromAngles)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace
