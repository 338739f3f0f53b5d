#include "cpdp/gp_regression.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "cpdp/error.hpp"
#include "cpdp/rng.hpp"
#include "json_util.hpp"

namespace cpdp::gp {

void GpHyperparams::validate() const {
  if (lengthscales.size() == 0) throw_invalid("GP needs at least one lengthscale");
  for (Eigen::Index i = 0; i < lengthscales.size(); ++i) {
    if (!(lengthscales[i] > 0.0) || !std::isfinite(lengthscales[i])) {
      throw_invalid("GP lengthscales must be positive and finite");
    }
  }
  if (!(signal_var > 0.0) || !std::isfinite(signal_var)) throw_invalid("signal_var must be > 0");
  if (!(noise_var > 0.0) || !std::isfinite(noise_var)) throw_invalid("noise_var must be > 0");
}

double rbf(const GpHyperparams& hp, const Eigen::Ref<const Eigen::RowVectorXd>& a,
           const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  const double r2 = ((a - b).array() / hp.lengthscales.transpose().array()).square().sum();
  return hp.signal_var * std::exp(-0.5 * r2);
}

Eigen::MatrixXd kernel_matrix(const GpHyperparams& hp, const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& b) {
  const Eigen::RowVectorXd inv_l = hp.lengthscales.cwiseInverse().transpose();
  const Eigen::MatrixXd as = a.array().rowwise() * inv_l.array();
  const Eigen::MatrixXd bs = b.array().rowwise() * inv_l.array();
  Eigen::MatrixXd r2 = (-2.0 * as * bs.transpose()).colwise() + as.rowwise().squaredNorm();
  r2.rowwise() += bs.rowwise().squaredNorm().transpose();
  return hp.signal_var * (-0.5 * r2.cwiseMax(0.0)).array().exp().matrix();
}

LaggedDataset build_lagged(const std::vector<std::vector<double>>& sequences, std::size_t lag) {
  if (lag == 0) throw_invalid("lag order must be >= 1");
  LaggedDataset data;
  std::size_t rows = 0;
  for (const auto& s : sequences) {
    if (s.size() >= lag + 1) rows += s.size() - lag;
  }
  if (rows == 0) {
    throw Error(ErrorCode::kEmptyDataset,
                "every sequence is shorter than lag order + 1 = " + std::to_string(lag + 1));
  }
  data.inputs.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(lag));
  data.outputs.resize(static_cast<Eigen::Index>(rows));
  Eigen::Index r = 0;
  for (const auto& s : sequences) {
    if (s.size() < lag + 1) {
      ++data.skipped_sequences;
      continue;
    }
    for (std::size_t t = lag; t < s.size(); ++t, ++r) {
      for (std::size_t j = 0; j < lag; ++j) {
        data.inputs(r, static_cast<Eigen::Index>(j)) = s[t - lag + j];
      }
      data.outputs[r] = s[t];
    }
  }
  return data;
}

namespace {

constexpr double kLog2Pi = 1.83787706640934548356065947281;

Eigen::MatrixXd chol_factor(const Eigen::MatrixXd& m, Eigen::LLT<Eigen::MatrixXd>& llt,
                            const char* what) {
  llt.compute(m);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kInvalidArgument, std::string("Cholesky failed for ") + what);
  }
  return llt.matrixL();
}

}  // namespace

double spgp_log_likelihood(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& y,
                           const GpHyperparams& hp, const Eigen::MatrixXd& inducing,
                           double jitter, SpgpGradient* grad) {
  const Eigen::Index n = inputs.rows();
  const Eigen::Index m = inducing.rows();
  const double s = hp.signal_var;
  const double noise = hp.noise_var;

  const Eigen::MatrixXd k_raw = kernel_matrix(hp, inducing, inducing);
  Eigen::MatrixXd k_mm = k_raw;
  k_mm.diagonal().array() += jitter;
  const Eigen::MatrixXd u = kernel_matrix(hp, inducing, inputs);  // m x n

  Eigen::LLT<Eigen::MatrixXd> llt_mm;
  chol_factor(k_mm, llt_mm, "K_mm");
  const auto l_mm = llt_mm.matrixL();
  const Eigen::MatrixXd v = l_mm.solve(u);  // m x n

  const Eigen::VectorXd q_diag = v.colwise().squaredNorm().transpose();
  const Eigen::VectorXd lambda = (s - q_diag.array()).cwiseMax(0.0) + noise;
  const Eigen::VectorXd inv_sqrt = lambda.cwiseSqrt().cwiseInverse();

  const Eigen::MatrixXd vs = v * inv_sqrt.asDiagonal();
  Eigen::MatrixXd a = vs * vs.transpose();
  a.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt_a;
  chol_factor(a, llt_a, "I + V L^-1 V^T");
  const auto l_a = llt_a.matrixL();

  const Eigen::VectorXd ys = y.cwiseProduct(inv_sqrt);
  const Eigen::VectorXd beta = l_a.solve(vs * ys);
  const double quad = ys.squaredNorm() - beta.squaredNorm();
  const double logdet = lambda.array().log().sum() +
                        2.0 * llt_a.matrixLLT().diagonal().array().log().sum();
  const double lml = -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(n) * kLog2Pi;

  if (grad == nullptr) return lml;

  // alpha = C^-1 y with C = Q_nn + Lambda (Woodbury through the two factors).
  const Eigen::VectorXd gamma = l_a.transpose().solve(beta);
  const Eigen::VectorXd alpha = (y - v.transpose() * gamma).cwiseQuotient(lambda);
  const Eigen::MatrixXd w2 = l_a.solve(v);  // m x n
  const Eigen::VectorXd c_inv_diag =
      lambda.cwiseInverse() - w2.colwise().squaredNorm().transpose().cwiseQuotient(
                                  lambda.cwiseProduct(lambda));
  const Eigen::VectorXd w = alpha.cwiseProduct(alpha) - c_inv_diag;

  const Eigen::MatrixXd b = l_mm.transpose().solve(v);  // K_mm^-1 U
  const Eigen::MatrixXd q_inv_u_lambda =
      l_mm.transpose().solve(l_a.transpose().solve(w2)) * lambda.cwiseInverse().asDiagonal();
  Eigen::MatrixXd g1 = (b * alpha) * alpha.transpose() - q_inv_u_lambda;
  g1 -= b * w.asDiagonal();
  Eigen::MatrixXd g2 = g1 * b.transpose();
  g2 = 0.5 * (g2 + g2.transpose()).eval();

  const Eigen::MatrixXd g1u = g1.cwiseProduct(u);
  const Eigen::MatrixXd g2k = g2.cwiseProduct(k_raw);

  const Eigen::Index dims = inputs.cols();
  grad->log_lengthscales.resize(dims);
  grad->inducing.resize(m, dims);
  for (Eigen::Index d = 0; d < dims; ++d) {
    const double inv_l2 = 1.0 / (hp.lengthscales[d] * hp.lengthscales[d]);
    // diff_nm(i, j) = x_id - xbar_jd
    const Eigen::MatrixXd diff_u =
        (-inducing.col(d)).replicate(1, n).rowwise() + inputs.col(d).transpose();
    const Eigen::MatrixXd diff_k =
        (-inducing.col(d)).replicate(1, m).rowwise() + inducing.col(d).transpose();
    grad->log_lengthscales[d] =
        inv_l2 * (g1u.cwiseProduct(diff_u.cwiseProduct(diff_u)).sum() -
                  0.5 * g2k.cwiseProduct(diff_k.cwiseProduct(diff_k)).sum());
    grad->inducing.col(d) = inv_l2 * (g1u.cwiseProduct(diff_u).rowwise().sum() -
                                      g2k.cwiseProduct(diff_k).rowwise().sum());
  }
  grad->log_signal_var = g1u.sum() - 0.5 * g2k.sum() + 0.5 * s * w.sum();
  grad->log_noise_var = 0.5 * noise * w.sum();
  return lml;
}

GpModel::GpModel(GpHyperparams hyper, Eigen::MatrixXd inducing, Eigen::MatrixXd train_inputs,
                 Eigen::VectorXd train_outputs, double mean_fn, double jitter)
    : hyper_(std::move(hyper)),
      inducing_(std::move(inducing)),
      train_inputs_(std::move(train_inputs)),
      train_outputs_(std::move(train_outputs)),
      mean_fn_(mean_fn),
      jitter_(jitter) {
  hyper_.validate();
  if (inducing_.rows() < 1) throw_invalid("GP needs at least one inducing input");
  if (inducing_.cols() != hyper_.lengthscales.size() ||
      train_inputs_.cols() != inducing_.cols()) {
    throw_invalid("GP input dimensions disagree");
  }
  if (train_inputs_.rows() != train_outputs_.size() || train_outputs_.size() == 0) {
    throw_invalid("GP training inputs/outputs mismatch");
  }
  if (inducing_.rows() > train_inputs_.rows()) {
    throw_invalid("GP inducing count exceeds training rows");
  }
  Eigen::MatrixXd k_mm = kernel_matrix(hyper_, inducing_, inducing_);
  k_mm.diagonal().array() += jitter_;
  chol_factor(k_mm, chol_mm_, "K_mm");
  const Eigen::MatrixXd v = chol_mm_.matrixL().solve(kernel_matrix(hyper_, inducing_, train_inputs_));
  const Eigen::VectorXd lambda =
      (hyper_.signal_var - v.colwise().squaredNorm().transpose().array()).cwiseMax(0.0) +
      hyper_.noise_var;
  const Eigen::VectorXd inv_sqrt = lambda.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd vs = v * inv_sqrt.asDiagonal();
  Eigen::MatrixXd a = vs * vs.transpose();
  a.diagonal().array() += 1.0;
  chol_factor(a, chol_a_, "I + V L^-1 V^T");
  const Eigen::VectorXd ys = (train_outputs_.array() - mean_fn_).matrix().cwiseProduct(inv_sqrt);
  beta_ = chol_a_.matrixL().solve(vs * ys);
}

Posterior GpModel::posterior(const Eigen::Ref<const Eigen::VectorXd>& input) const {
  if (input.size() != inducing_.cols()) {
    throw_invalid("GP posterior input length " + std::to_string(input.size()) + " != lag order " +
                  std::to_string(inducing_.cols()));
  }
  if (!input.allFinite()) throw_invalid("GP posterior input is not finite");
  const Eigen::RowVectorXd x = input.transpose();
  Eigen::VectorXd k(inducing_.rows());
  for (Eigen::Index i = 0; i < k.size(); ++i) k[i] = rbf(hyper_, inducing_.row(i), x);
  const Eigen::VectorXd v = chol_mm_.matrixL().solve(k);
  const Eigen::VectorXd w = chol_a_.matrixL().solve(v);
  Posterior p;
  p.mean = mean_fn_ + w.dot(beta_);
  const double var = hyper_.signal_var - v.squaredNorm() + w.squaredNorm() + hyper_.noise_var;
  p.variance = std::max(var, hyper_.noise_var);
  return p;
}

Posterior GpModel::posterior(const std::vector<double>& input) const {
  return posterior(Eigen::Map<const Eigen::VectorXd>(input.data(),
                                                     static_cast<Eigen::Index>(input.size())));
}

double GpModel::log_marginal_likelihood() const {
  return spgp_log_likelihood(train_inputs_, (train_outputs_.array() - mean_fn_).matrix(), hyper_,
                             inducing_, jitter_);
}

std::string GpModel::checksum() const {
  // FNV-1a over the little-endian bytes of the training data.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double value) {
    auto bits = std::bit_cast<std::uint64_t>(value);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  for (Eigen::Index i = 0; i < train_inputs_.rows(); ++i) {
    for (Eigen::Index j = 0; j < train_inputs_.cols(); ++j) mix(train_inputs_(i, j));
    mix(train_outputs_[i]);
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

Eigen::MatrixXd select_inducing(const Eigen::MatrixXd& inputs, std::size_t count,
                                std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(inputs.rows());
  if (count == 0 || count > n) throw_invalid("inducing count must be in [1, training rows]");
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  std::vector<bool> taken(n, false);
  chosen.push_back(static_cast<std::size_t>(rng.next() % n));
  taken[chosen[0]] = true;
  Eigen::VectorXd d2 = (inputs.rowwise() - inputs.row(static_cast<Eigen::Index>(chosen[0])))
                           .rowwise()
                           .squaredNorm();
  while (chosen.size() < count) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) total += d2[static_cast<Eigen::Index>(i)];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        r -= d2[static_cast<Eigen::Index>(i)];
        pick = i;
        if (r <= 0.0) break;
      }
    }
    if (pick == n || taken[pick]) {
      // All remaining rows coincide with chosen ones; take the next free row.
      std::size_t skip = static_cast<std::size_t>(rng.next() % (n - chosen.size()));
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        if (skip-- == 0) {
          pick = i;
          break;
        }
      }
    }
    taken[pick] = true;
    chosen.push_back(pick);
    const Eigen::VectorXd dn =
        (inputs.rowwise() - inputs.row(static_cast<Eigen::Index>(pick))).rowwise().squaredNorm();
    d2 = d2.cwiseMin(dn);
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(count), inputs.cols());
  for (std::size_t i = 0; i < count; ++i) {
    out.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(chosen[i]));
  }
  return out;
}

namespace {

// Optimisation vector: [log l_1..k, log signal_var, log noise_var, inducing (row-major)].
struct Packing {
  Eigen::Index dims;
  Eigen::Index m;
  bool with_inducing;

  Eigen::Index size() const { return dims + 2 + (with_inducing ? m * dims : 0); }

  Eigen::VectorXd pack(const GpHyperparams& hp, const Eigen::MatrixXd& z) const {
    Eigen::VectorXd p(size());
    p.head(dims) = hp.lengthscales.array().log().matrix();
    p[dims] = std::log(hp.signal_var);
    p[dims + 1] = std::log(hp.noise_var);
    if (with_inducing) {
      for (Eigen::Index i = 0; i < m; ++i) p.segment(dims + 2 + i * dims, dims) = z.row(i).transpose();
    }
    return p;
  }

  void unpack(const Eigen::VectorXd& p, GpHyperparams& hp, Eigen::MatrixXd& z) const {
    hp.lengthscales = p.head(dims).array().exp().matrix();
    hp.signal_var = std::exp(p[dims]);
    hp.noise_var = std::exp(p[dims + 1]);
    if (with_inducing) {
      for (Eigen::Index i = 0; i < m; ++i) z.row(i) = p.segment(dims + 2 + i * dims, dims).transpose();
    }
  }

  Eigen::VectorXd gradient(const SpgpGradient& g) const {
    Eigen::VectorXd out(size());
    out.head(dims) = g.log_lengthscales;
    out[dims] = g.log_signal_var;
    out[dims + 1] = g.log_noise_var;
    if (with_inducing) {
      for (Eigen::Index i = 0; i < m; ++i) out.segment(dims + 2 + i * dims, dims) = g.inducing.row(i).transpose();
    }
    return out;
  }

  void apply_floors(Eigen::VectorXd& p) const {
    const double lo = std::log(kParamFloor);
    for (Eigen::Index i = 0; i < dims + 2; ++i) p[i] = std::max(p[i], lo);
  }
};

}  // namespace

GpModel fit(const LaggedDataset& data, const FitOptions& options, FitReport* report) {
  const Eigen::Index n = data.inputs.rows();
  const Eigen::Index dims = data.inputs.cols();
  if (n == 0 || dims == 0) throw Error(ErrorCode::kEmptyDataset, "GP fit on an empty dataset");
  const auto m = static_cast<Eigen::Index>(
      options.inducing_inputs ? options.inducing_inputs->rows()
                              : static_cast<Eigen::Index>(options.inducing));
  if (m < 1 || m > n) {
    throw_invalid("inducing count " + std::to_string(m) + " must be in [1, " + std::to_string(n) +
                  "]");
  }

  const double mean_fn = data.outputs.mean();
  const Eigen::VectorXd y = (data.outputs.array() - mean_fn).matrix();
  const double out_var = y.squaredNorm() / static_cast<double>(n);

  GpHyperparams hp;
  hp.lengthscales.resize(dims);
  for (Eigen::Index d = 0; d < dims; ++d) {
    const double mu = data.inputs.col(d).mean();
    const double var = (data.inputs.col(d).array() - mu).square().mean();
    hp.lengthscales[d] = std::max(std::sqrt(var), kParamFloor);
  }
  hp.signal_var = std::max(out_var, kParamFloor);
  hp.noise_var = std::max(0.01 * out_var, kParamFloor);

  Eigen::MatrixXd z = options.inducing_inputs
                          ? *options.inducing_inputs
                          : select_inducing(data.inputs, static_cast<std::size_t>(m), options.seed);
  if (z.cols() != dims) throw_invalid("inducing inputs have the wrong dimension");

  const Packing packing{dims, m, options.optimize_inducing};
  Eigen::VectorXd params = packing.pack(hp, z);
  packing.apply_floors(params);
  packing.unpack(params, hp, z);

  SpgpGradient g;
  double ll = spgp_log_likelihood(data.inputs, y, hp, z, kJitter, &g);
  const double initial = ll;
  double step = 0.1;
  std::size_t it = 0;
  for (; it < options.max_iterations; ++it) {
    const Eigen::VectorXd grad = packing.gradient(g);
    const double gnorm = grad.norm();
    if (!(gnorm > 0.0) || !std::isfinite(gnorm)) break;
    bool accepted = false;
    double new_ll = ll;
    Eigen::VectorXd trial;
    GpHyperparams trial_hp = hp;
    Eigen::MatrixXd trial_z = z;
    SpgpGradient trial_g;
    for (int halvings = 0; halvings < 40; ++halvings) {
      trial = params + (step / gnorm) * grad;
      packing.apply_floors(trial);
      packing.unpack(trial, trial_hp, trial_z);
      try {
        new_ll = spgp_log_likelihood(data.inputs, y, trial_hp, trial_z, kJitter, &trial_g);
      } catch (const Error&) {
        new_ll = -std::numeric_limits<double>::infinity();
      }
      if (std::isfinite(new_ll) && new_ll >= ll) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double delta = new_ll - ll;
    params = trial;
    hp = trial_hp;
    z = trial_z;
    g = trial_g;
    ll = new_ll;
    step *= 1.5;
    if (std::abs(delta) < options.tolerance) {
      ++it;
      break;
    }
  }

  if (report) {
    report->initial_log_likelihood = initial;
    report->final_log_likelihood = ll;
    report->iterations = it;
  }
  return GpModel(hp, z, data.inputs, data.outputs, mean_fn, kJitter);
}

namespace {

using detail::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::kParse, std::string("model: '") + what + "' must be an array");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto row = j[i].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorCode::kParse, std::string("model: row width mismatch in '") + what + "'");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

}  // namespace

std::string model_to_json(const GpModel& model) {
  json doc;
  doc["format"] = "cpdp-spgp-1";
  doc["lag_order"] = model.lag_order();
  const auto& hp = model.hyper();
  doc["hyper"] = {{"lengthscales", std::vector<double>(hp.lengthscales.data(),
                                                       hp.lengthscales.data() + hp.lengthscales.size())},
                  {"signal_var", hp.signal_var},
                  {"noise_var", hp.noise_var}};
  doc["inducing"] = matrix_to_json(model.inducing());
  doc["mean_fn"] = model.mean_fn();
  doc["jitter"] = model.jitter();
  const auto& y = model.train_outputs();
  const double mean = y.mean();
  doc["training"] = {{"inputs", matrix_to_json(model.train_inputs())},
                     {"outputs", std::vector<double>(y.data(), y.data() + y.size())}};
  doc["stats"] = {{"n", y.size()},
                  {"output_mean", mean},
                  {"output_var", (y.array() - mean).square().mean()}};
  doc["checksum"] = model.checksum();
  return doc.dump(1);
}

GpModel parse_model(const std::string& json_text) {
  const json doc = detail::parse_json(json_text, "model");
  const auto k = detail::get_field<Eigen::Index>(doc, "lag_order", "model");
  const json hyper = detail::get_field<json>(doc, "hyper", "model");
  GpHyperparams hp;
  const auto ls = detail::get_field<std::vector<double>>(hyper, "lengthscales", "model.hyper");
  hp.lengthscales = Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  hp.signal_var = detail::get_field<double>(hyper, "signal_var", "model.hyper");
  hp.noise_var = detail::get_field<double>(hyper, "noise_var", "model.hyper");
  const json training = detail::get_field<json>(doc, "training", "model");
  const auto outputs = detail::get_field<std::vector<double>>(training, "outputs", "model.training");
  GpModel model(hp, matrix_from_json(detail::get_field<json>(doc, "inducing", "model"), k, "inducing"),
                matrix_from_json(detail::get_field<json>(training, "inputs", "model.training"), k,
                                 "training.inputs"),
                Eigen::Map<const Eigen::VectorXd>(outputs.data(),
                                                  static_cast<Eigen::Index>(outputs.size())),
                detail::get_field<double>(doc, "mean_fn", "model"), doc.value("jitter", kJitter));
  const auto expected = detail::get_field<std::string>(doc, "checksum", "model");
  if (model.checksum() != expected) {
    throw Error(ErrorCode::kValidation,
                "model: training-data checksum mismatch (file " + expected + ", computed " +
                    model.checksum() + ")");
  }
  return model;
}

void save_model(const GpModel& model, const std::filesystem::path& path) {
  detail::write_text_file(path, model_to_json(model));
}

GpModel load_model(const std::filesystem::path& path) {
  return parse_model(detail::read_text_file(path));
}

}  // namespace cpdp::gp
