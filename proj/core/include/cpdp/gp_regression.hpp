#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace cpdp::gp {

inline constexpr double kJitter = 1e-8;
inline constexpr double kParamFloor = 1e-6;

// RBF kernel hyperparameters: k(x, x') = signal_var * exp(-0.5 sum_d (x_d - x'_d)^2 / l_d^2).
struct GpHyperparams {
  Eigen::VectorXd lengthscales;
  double signal_var = 1.0;
  double noise_var = 1e-2;

  void validate() const;
};

double rbf(const GpHyperparams& hp, const Eigen::Ref<const Eigen::RowVectorXd>& a,
           const Eigen::Ref<const Eigen::RowVectorXd>& b);
// Rows of a against rows of b.
Eigen::MatrixXd kernel_matrix(const GpHyperparams& hp, const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& b);

// Autoregressive embedding: rows of k consecutive values -> the next value.
struct LaggedDataset {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd outputs;
  std::size_t skipped_sequences = 0;  // sequences shorter than k + 1

  std::size_t rows() const { return static_cast<std::size_t>(outputs.size()); }
};

LaggedDataset build_lagged(const std::vector<std::vector<double>>& sequences, std::size_t lag);

struct Posterior {
  double mean = 0.0;
  double variance = 0.0;
};

// Gradient of the SPGP log marginal likelihood with respect to the log
// hyperparameters and the inducing inputs.
struct SpgpGradient {
  Eigen::VectorXd log_lengthscales;
  double log_signal_var = 0.0;
  double log_noise_var = 0.0;
  Eigen::MatrixXd inducing;
};

// SPGP (FITC) log marginal likelihood of centred outputs y. Optionally fills
// the analytic gradient.
double spgp_log_likelihood(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& y,
                           const GpHyperparams& hp, const Eigen::MatrixXd& inducing,
                           double jitter = kJitter, SpgpGradient* grad = nullptr);

// Fitted sparse pseudo-input GP for one scalar output. Immutable; the
// factorisations are rebuilt from the stored training data on construction.
class GpModel {
 public:
  GpModel(GpHyperparams hyper, Eigen::MatrixXd inducing, Eigen::MatrixXd train_inputs,
          Eigen::VectorXd train_outputs, double mean_fn, double jitter = kJitter);

  Posterior posterior(const Eigen::Ref<const Eigen::VectorXd>& input) const;
  Posterior posterior(const std::vector<double>& input) const;

  double log_marginal_likelihood() const;

  const GpHyperparams& hyper() const { return hyper_; }
  const Eigen::MatrixXd& inducing() const { return inducing_; }
  const Eigen::MatrixXd& train_inputs() const { return train_inputs_; }
  const Eigen::VectorXd& train_outputs() const { return train_outputs_; }
  double mean_fn() const { return mean_fn_; }
  double jitter() const { return jitter_; }
  std::size_t lag_order() const { return static_cast<std::size_t>(inducing_.cols()); }
  std::string checksum() const;

 private:
  GpHyperparams hyper_;
  Eigen::MatrixXd inducing_;
  Eigen::MatrixXd train_inputs_;
  Eigen::VectorXd train_outputs_;  // raw, not centred
  double mean_fn_;
  double jitter_;

  Eigen::LLT<Eigen::MatrixXd> chol_mm_;  // K_mm + jitter I
  Eigen::LLT<Eigen::MatrixXd> chol_a_;   // I + V diag(1/lambda) V^T
  Eigen::VectorXd beta_;
};

struct FitOptions {
  std::size_t inducing = 30;
  std::uint64_t seed = 0;
  std::size_t max_iterations = 200;
  double tolerance = 1e-6;  // stop when |delta log-likelihood| falls below this
  bool optimize_inducing = true;
  // Fixed starting inducing inputs (M x k); k-means++ selection when absent.
  std::optional<Eigen::MatrixXd> inducing_inputs;
};

struct FitReport {
  double initial_log_likelihood = 0.0;
  double final_log_likelihood = 0.0;
  std::size_t iterations = 0;
};

// Maximises the SPGP marginal likelihood by gradient ascent with step halving.
// Starts from: lengthscales = per-dimension input std, signal_var = output
// variance, noise_var = 1% of output variance (all floored at kParamFloor).
GpModel fit(const LaggedDataset& data, const FitOptions& options, FitReport* report = nullptr);

// k-means++ style seeding from the rows of `inputs`.
Eigen::MatrixXd select_inducing(const Eigen::MatrixXd& inputs, std::size_t count,
                                std::uint64_t seed);

std::string model_to_json(const GpModel& model);
GpModel parse_model(const std::string& json_text);
void save_model(const GpModel& model, const std::filesystem::path& path);
GpModel load_model(const std::filesystem::path& path);

}  // namespace cpdp::gp
