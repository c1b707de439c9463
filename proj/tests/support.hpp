#pragma once

// Fixtures and independent reference implementations for the test suite.

#include <abp/abp.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace abp::testing {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("abp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Plain-loop lq "norm" with no rescaling.
inline double naive_lq(const VectorXd& w, double q) {
  double s = 0.0;
  for (Index i = 0; i < w.size(); ++i) s += std::pow(std::abs(w(i)), q);
  return std::pow(s, 1.0 / q);
}

// Random vector with entries spread over many orders of magnitude, some zeros.
inline VectorXd mixed_scale_vector(std::mt19937_64& rng, Index d) {
  std::uniform_real_distribution<double> expo(-6.0, 6.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::bernoulli_distribution zero(0.15);
  const double base = std::pow(10.0, expo(rng));
  VectorXd w(d);
  for (Index i = 0; i < d; ++i) w(i) = zero(rng) ? 0.0 : base * unit(rng) * std::pow(10.0, 2.0 * unit(rng));
  if ((w.array() == 0.0).all()) w(0) = base;
  return w;
}

inline MatrixXd gaussian_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

// Moore-Penrose solution through the SVD, independent of the COD path.
inline VectorXd pinv_solve(const MatrixXd& x, const VectorXd& y) {
  Eigen::JacobiSVD<MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd s = svd.singularValues();
  const double cut = 1e-12 * s(0) * static_cast<double>(std::max(x.rows(), x.cols()));
  VectorXd inv = VectorXd::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > cut) inv(i) = 1.0 / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * y;
}

// Exhaustive LASSO oracle for tiny problems without a constant column:
// every support/sign pattern is solved exactly and the best KKT-consistent
// candidate is returned.
inline VectorXd lasso_enumerate(const MatrixXd& x, const VectorXd& y, double lambda) {
  const Index m = x.cols();
  const double n = static_cast<double>(x.rows());
  const MatrixXd g = x.transpose() * x / n;
  const VectorXd c = x.transpose() * y / n;
  auto objective = [&](const VectorXd& w) {
    return 0.5 * (y - x * w).squaredNorm() / n + lambda * w.lpNorm<1>();
  };
  VectorXd best = VectorXd::Zero(m);
  double best_f = objective(best);
  // Each coordinate takes a sign in {-1, 0, +1}.
  Index total = 1;
  for (Index j = 0; j < m; ++j) total *= 3;
  for (Index code = 0; code < total; ++code) {
    Index rest = code;
    std::vector<Index> act;
    VectorXd s(m);
    for (Index j = 0; j < m; ++j) {
      s(j) = static_cast<double>(rest % 3) - 1.0;
      rest /= 3;
      if (s(j) != 0.0) act.push_back(j);
    }
    if (act.empty()) continue;
    MatrixXd gaa(act.size(), act.size());
    VectorXd rhs(act.size());
    for (std::size_t a = 0; a < act.size(); ++a) {
      rhs(a) = c(act[a]) - lambda * s(act[a]);
      for (std::size_t b = 0; b < act.size(); ++b) gaa(a, b) = g(act[a], act[b]);
    }
    const VectorXd wa = gaa.ldlt().solve(rhs);
    VectorXd w = VectorXd::Zero(m);
    bool consistent = true;
    for (std::size_t a = 0; a < act.size(); ++a) {
      if (wa(a) * s(act[a]) <= 0.0) consistent = false;
      w(act[a]) = wa(a);
    }
    if (!consistent) continue;
    const double f = objective(w);
    if (f < best_f) {
      best_f = f;
      best = w;
    }
  }
  return best;
}

// Hand-assembled network from row-major weight lists.
inline Network make_network(std::vector<MatrixXd> layers, Activation act) {
  Network net;
  net.activation = ActivationKind{act};
  for (auto& w : layers) net.layers.emplace_back(std::move(w));
  return net;
}

inline Network random_network(std::mt19937_64& rng, const std::vector<Index>& dims, Activation act,
                              double scale = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  Network net;
  net.activation = ActivationKind{act};
  for (std::size_t k = 1; k < dims.size(); ++k) {
    MatrixXd w(dims[k], dims[k - 1] + 1);
    for (Index i = 0; i < w.rows(); ++i)
      for (Index j = 0; j < w.cols(); ++j) w(i, j) = scale * n(rng) / std::sqrt(static_cast<double>(dims[k - 1]));
    net.layers.emplace_back(std::move(w));
  }
  return net;
}

// Network whose every neuron has exactly one nonzero incoming weight.
inline Network one_hot_network(std::mt19937_64& rng, const std::vector<Index>& dims, Activation act) {
  std::uniform_real_distribution<double> mag(0.5, 2.0);
  std::bernoulli_distribution coin(0.5);
  Network net;
  net.activation = ActivationKind{act};
  for (std::size_t k = 1; k < dims.size(); ++k) {
    MatrixXd w = MatrixXd::Zero(dims[k], dims[k - 1] + 1);
    std::uniform_int_distribution<Index> pick(0, dims[k - 1] - 1);
    for (Index i = 0; i < w.rows(); ++i) w(i, pick(rng)) = (coin(rng) ? 1.0 : -1.0) * mag(rng);
    net.layers.emplace_back(std::move(w));
  }
  return net;
}

// Straight scalar forward pass.
inline double naive_forward(const Network& net, const VectorXd& x) {
  std::vector<double> f(x.data(), x.data() + x.size());
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const MatrixXd& w = net.layers[k].weights;
    std::vector<double> g(static_cast<std::size_t>(w.rows()));
    for (Index i = 0; i < w.rows(); ++i) {
      double s = w(i, w.cols() - 1);
      for (Index j = 0; j + 1 < w.cols(); ++j) s += w(i, j) * f[static_cast<std::size_t>(j)];
      g[static_cast<std::size_t>(i)] = k + 1 == net.layers.size() ? s : net.activation.apply(s);
    }
    f = std::move(g);
  }
  return f.front();
}

}  // namespace abp::testing
