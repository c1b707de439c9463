#pragma once

// Mini-batch SGD (optionally with momentum) on the mean squared error, plus a
// central-difference gradient checker for the backprop path.

#include <abp/dataset.hpp>
#include <abp/error.hpp>
#include <abp/network.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace abp {

enum class Optimizer { sgd, sgd_momentum };

struct Architecture {
  std::vector<Index> dims;  // {p, n_1, ..., n_{L-1}, 1}
  ActivationKind activation;
};

struct TrainConfig {
  int epochs = 40;
  int batch_size = 64;
  double learning_rate = 0.0005;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::sgd_momentum;
  double momentum = 0.9;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (optimizer == Optimizer::sgd_momentum && !(momentum >= 0.0 && momentum < 1.0))
      throw ConfigError("momentum must lie in [0, 1)");
  }
};

struct EpochLog {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  Network network;
  std::vector<EpochLog> log;
};

/// He-uniform weights, U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases.
inline Network init_network(const Architecture& arch, std::uint64_t seed) {
  if (arch.dims.size() < 2) throw ConfigError("architecture needs at least input and output widths");
  if (arch.dims.back() != 1) throw ConfigError("output width must be 1");
  for (Index d : arch.dims)
    if (d < 1) throw ConfigError("layer widths must be >= 1");
  std::mt19937_64 rng(seed);
  Network net;
  net.activation = arch.activation;
  for (std::size_t k = 1; k < arch.dims.size(); ++k) {
    const Index fan_in = arch.dims[k - 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-limit, limit);
    MatrixXd w = MatrixXd::Zero(arch.dims[k], fan_in + 1);
    for (Index i = 0; i < w.rows(); ++i)
      for (Index j = 0; j < fan_in; ++j) w(i, j) = u(rng);
    net.layers.emplace_back(std::move(w));
  }
  return net;
}

inline double mse(const Network& net, const MatrixXd& x, const VectorXd& y) {
  if (x.rows() != y.size()) throw DimensionError("feature rows and target length differ");
  return (predict(net, x) - y).squaredNorm() / static_cast<double>(y.size());
}

inline double mse(const Network& net, const Dataset& data) { return mse(net, data.features, data.targets); }

/// Gradient of mean((f(x_i) - y_i)^2) w.r.t. every layer's weight matrix.
/// Masked slots get a zero gradient. Returns the loss through `loss_out`.
inline std::vector<MatrixXd> mse_gradient(const Network& net, const MatrixXd& x, const VectorXd& y,
                                          double* loss_out = nullptr) {
  const ActivationTrace t = forward_trace(net, x);
  const auto n = static_cast<double>(x.rows());
  const std::size_t depth = net.layers.size();
  VectorXd residual = t.predictions() - y;
  if (loss_out) *loss_out = residual.squaredNorm() / n;

  std::vector<MatrixXd> grads(depth);
  MatrixXd delta = (2.0 / n) * residual;  // N x 1, dL/dg^(L)
  for (std::size_t k = depth; k-- > 0;) {
    const MatrixXd& f_prev = t.outputs[k];
    const auto& w = net.layers[k].weights;
    MatrixXd g(w.rows(), w.cols());
    g.leftCols(w.cols() - 1).noalias() = delta.transpose() * f_prev;
    g.col(w.cols() - 1) = delta.colwise().sum().transpose();
    grads[k] = net.layers[k].mask.select(MatrixXd::Zero(g.rows(), g.cols()), g);
    if (k > 0) {
      MatrixXd back = delta * w.leftCols(w.cols() - 1);
      delta = back.cwiseProduct(net.activation.derivative(t.pre_activations[k]));
    }
  }
  return grads;
}

/// Trains a freshly initialized network. Rows are reshuffled every epoch
/// with a generator seeded from `cfg.seed`. Throws DivergenceError when the
/// loss stops being finite.
inline TrainResult train(const Architecture& arch, const Dataset& data, const TrainConfig& cfg,
                         const Dataset* val = nullptr) {
  cfg.validate();
  validate(data);
  if (arch.dims.empty() || arch.dims.front() != data.cols())
    throw DimensionError("architecture input width does not match dataset width");

  TrainResult result;
  result.network = init_network(arch, cfg.seed);
  Network& net = result.network;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<MatrixXd> velocity;
  for (const auto& l : net.layers) velocity.push_back(MatrixXd::Zero(l.weights.rows(), l.weights.cols()));

  const Index n = data.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const Index batch = std::min<Index>(cfg.batch_size, n);
  MatrixXd xb;
  VectorXd yb;

  const double beta = cfg.optimizer == Optimizer::sgd_momentum ? cfg.momentum : 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < n; start += batch) {
      const Index len = std::min(batch, n - start);
      xb.resize(len, data.cols());
      yb.resize(len);
      for (Index i = 0; i < len; ++i) {
        const Index r = order[static_cast<std::size_t>(start + i)];
        xb.row(i) = data.features.row(r);
        yb(i) = data.targets(r);
      }
      double loss = 0.0;
      const auto grads = mse_gradient(net, xb, yb, &loss);
      if (!std::isfinite(loss))
        throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch) +
                                         " (non-finite batch loss)");
      for (std::size_t k = 0; k < net.layers.size(); ++k) {
        velocity[k] = beta * velocity[k] - cfg.learning_rate * grads[k];
        net.layers[k].weights += velocity[k];
        net.layers[k].enforce_mask();
      }
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_mse = mse(net, data);
    if (!std::isfinite(entry.train_mse))
      throw DivergenceError(epoch, "training diverged at epoch " + std::to_string(epoch) +
                                       " (non-finite training MSE)");
    if (val) entry.val_mse = mse(net, *val);
    result.log.push_back(entry);
  }
  return result;
}

inline void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log '" + path.string() + "'");
  out << "epoch,train_mse,val_mse\n" << std::setprecision(17);
  for (const auto& e : log) out << e.epoch << ',' << e.train_mse << ',' << e.val_mse << '\n';
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  Index checked = 0;
};

/// Compares backprop against central differences on every unmasked weight.
/// Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
/// vanishing gradients from dividing roundoff by zero.
inline GradCheckResult grad_check_detailed(Network net, const Dataset& data, double epsilon,
                                           double floor = 1e-7) {
  const auto analytic = mse_gradient(net, data.features, data.targets);
  GradCheckResult r;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    auto& w = net.layers[k].weights;
    for (Index i = 0; i < w.rows(); ++i)
      for (Index j = 0; j < w.cols(); ++j) {
        if (net.layers[k].mask(i, j)) continue;
        const double orig = w(i, j);
        w(i, j) = orig + epsilon;
        const double up = mse(net, data);
        w(i, j) = orig - epsilon;
        const double down = mse(net, data);
        w(i, j) = orig;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double a = analytic[k](i, j);
        const double abs_err = std::abs(a - numeric);
        const double denom = std::max({std::abs(a), std::abs(numeric), floor});
        r.max_abs_error = std::max(r.max_abs_error, abs_err);
        r.max_relative_error = std::max(r.max_relative_error, abs_err / denom);
        ++r.checked;
      }
  }
  return r;
}

inline double grad_check(const Network& net, const Dataset& data, double epsilon) {
  return grad_check_detailed(net, data, epsilon).max_relative_error;
}

}  // namespace abp
