#pragma once

// Fully connected networks with a constant neuron appended to every layer
// input. Layer k maps n_{k-1}+1 inputs to n_k outputs; the last column of each
// weight matrix multiplies the constant 1 (the bias). Hidden layers share one
// activation, the output layer is linear.

#include <abp/dataset.hpp>
#include <abp/error.hpp>

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace abp {

enum class Activation { relu, tanh, sigmoid, identity };

struct ActivationKind {
  Activation kind = Activation::relu;

  /// Lipschitz constant rho of the activation.
  constexpr double lipschitz() const {
    return kind == Activation::sigmoid ? 0.25 : 1.0;
  }

  constexpr std::string_view name() const {
    switch (kind) {
      case Activation::relu: return "relu";
      case Activation::tanh: return "tanh";
      case Activation::sigmoid: return "sigmoid";
      case Activation::identity: return "identity";
    }
    return "relu";
  }

  static ActivationKind parse(std::string_view s) {
    if (s == "relu") return {Activation::relu};
    if (s == "tanh") return {Activation::tanh};
    if (s == "sigmoid") return {Activation::sigmoid};
    if (s == "identity" || s == "linear") return {Activation::identity};
    throw ConfigError("unknown activation '" + std::string(s) + "'");
  }

  double apply(double x) const {
    switch (kind) {
      case Activation::relu: return x > 0.0 ? x : 0.0;
      case Activation::tanh: return std::tanh(x);
      case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
      case Activation::identity: return x;
    }
    return x;
  }

  /// Derivative; the ReLU subgradient at 0 is 0.
  double derivative(double x) const {
    switch (kind) {
      case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
      case Activation::tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      }
      case Activation::sigmoid: {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 - s);
      }
      case Activation::identity: return 1.0;
    }
    return 1.0;
  }

  MatrixXd apply(const MatrixXd& pre) const {
    return pre.unaryExpr([this](double v) { return apply(v); });
  }

  MatrixXd derivative(const MatrixXd& pre) const {
    return pre.unaryExpr([this](double v) { return derivative(v); });
  }

  friend bool operator==(ActivationKind, ActivationKind) = default;
};

using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Weights of one layer, n_k x (n_{k-1}+1). `mask(i, j)` marks a pruned slot,
/// which is held at exactly zero.
struct LayerWeights {
  MatrixXd weights;
  MaskMatrix mask;

  LayerWeights() = default;
  explicit LayerWeights(MatrixXd w)
      : weights(std::move(w)), mask(MaskMatrix::Constant(weights.rows(), weights.cols(), false)) {}

  Index outputs() const { return weights.rows(); }
  Index inputs() const { return weights.cols() - 1; }

  void prune(Index i, Index j) {
    mask(i, j) = true;
    weights(i, j) = 0.0;
  }

  void enforce_mask() {
    weights = mask.select(MatrixXd::Zero(weights.rows(), weights.cols()), weights);
  }

  friend bool operator==(const LayerWeights& a, const LayerWeights& b) {
    return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
           (a.weights.array() == b.weights.array()).all() && (a.mask == b.mask).all();
  }
};

struct Network {
  std::vector<LayerWeights> layers;
  ActivationKind activation;

  Index depth() const { return static_cast<Index>(layers.size()); }
  Index input_width() const { return layers.empty() ? 0 : layers.front().inputs(); }

  /// {n_0, n_1, ..., n_L}, excluding constant neurons.
  std::vector<Index> layer_dims() const {
    std::vector<Index> dims;
    if (layers.empty()) return dims;
    dims.push_back(layers.front().inputs());
    for (const auto& l : layers) dims.push_back(l.outputs());
    return dims;
  }

  void validate() const {
    if (layers.empty()) throw DimensionError("network has no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      if (l.weights.cols() < 1 || l.weights.rows() < 1)
        throw DimensionError("layer " + std::to_string(k + 1) + " is empty");
      if (l.mask.rows() != l.weights.rows() || l.mask.cols() != l.weights.cols())
        throw DimensionError("layer " + std::to_string(k + 1) + " mask shape mismatch");
      if (k > 0 && l.inputs() != layers[k - 1].outputs())
        throw DimensionError("layer " + std::to_string(k + 1) + " expects " +
                             std::to_string(l.inputs()) + " inputs but layer " + std::to_string(k) +
                             " has " + std::to_string(layers[k - 1].outputs()) + " outputs");
      if (!l.weights.allFinite())
        throw DataError("layer " + std::to_string(k + 1) + " has non-finite weights");
      if ((l.mask && (l.weights.array() != 0.0)).any())
        throw DataError("layer " + std::to_string(k + 1) + " has nonzero masked weights");
    }
    if (layers.back().outputs() != 1) throw DimensionError("output layer must have width 1");
  }

  friend bool operator==(const Network&, const Network&) = default;
};

/// Appends the constant-1 column.
inline MatrixXd with_constant(const MatrixXd& f) {
  MatrixXd out(f.rows(), f.cols() + 1);
  out.leftCols(f.cols()) = f;
  out.col(f.cols()).setOnes();
  return out;
}

/// Batch evaluation; row i of the result is g_1^(L)(x_i).
inline VectorXd predict(const Network& net, const MatrixXd& x) {
  if (net.layers.empty()) throw DimensionError("network has no layers");
  if (x.cols() != net.input_width())
    throw DimensionError("input width " + std::to_string(x.cols()) + " does not match network input " +
                         std::to_string(net.input_width()));
  MatrixXd f = x;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& w = net.layers[k].weights;
    MatrixXd g = f * w.leftCols(w.cols() - 1).transpose();
    g.rowwise() += w.col(w.cols() - 1).transpose();
    f = (k + 1 == net.layers.size()) ? std::move(g) : net.activation.apply(g);
  }
  return f.col(0);
}

inline double forward(const Network& net, const Eigen::Ref<const VectorXd>& x) {
  if (x.size() != net.input_width())
    throw DimensionError("input length " + std::to_string(x.size()) + " does not match network input " +
                         std::to_string(net.input_width()));
  VectorXd f = x;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& w = net.layers[k].weights;
    VectorXd g = w.leftCols(w.cols() - 1) * f + w.col(w.cols() - 1);
    if (k + 1 == net.layers.size()) return g(0);
    f = g.unaryExpr([&](double v) { return net.activation.apply(v); });
  }
  return f(0);
}

/// outputs[k] is N x n_k holding f_j^(k) (outputs[0] = raw inputs);
/// pre_activations[k] holds g_j^(k) for k >= 1 (pre_activations[0] is empty).
/// The output layer is linear, so outputs[L] == pre_activations[L].
struct ActivationTrace {
  std::vector<MatrixXd> outputs;
  std::vector<MatrixXd> pre_activations;

  Index depth() const { return static_cast<Index>(outputs.size()) - 1; }
  Index rows() const { return outputs.empty() ? 0 : outputs.front().rows(); }

  /// Regression design for layer k: f^(k-1) with the constant column.
  MatrixXd features_for(Index k) const { return with_constant(outputs[static_cast<std::size_t>(k - 1)]); }

  VectorXd predictions() const { return outputs.back().col(0); }
};

inline ActivationTrace forward_trace(const Network& net, const MatrixXd& x) {
  if (net.layers.empty()) throw DimensionError("network has no layers");
  if (x.cols() != net.input_width())
    throw DimensionError("input width " + std::to_string(x.cols()) + " does not match network input " +
                         std::to_string(net.input_width()));
  ActivationTrace t;
  t.outputs.push_back(x);
  t.pre_activations.emplace_back();
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& w = net.layers[k].weights;
    MatrixXd g = t.outputs.back() * w.leftCols(w.cols() - 1).transpose();
    g.rowwise() += w.col(w.cols() - 1).transpose();
    MatrixXd f = (k + 1 == net.layers.size()) ? g : net.activation.apply(g);
    t.pre_activations.push_back(std::move(g));
    t.outputs.push_back(std::move(f));
  }
  return t;
}

inline ActivationTrace forward_trace(const Network& net, const Dataset& data) {
  return forward_trace(net, data.features);
}

struct ParamCount {
  Index total = 0;
  Index nonzero = 0;
};

/// Counts every weight slot, constant-neuron weights included.
inline ParamCount count_params(const Network& net) {
  ParamCount c;
  for (const auto& l : net.layers) {
    c.total += l.weights.size();
    c.nonzero += ((l.weights.array() != 0.0) && !l.mask).count();
  }
  return c;
}

inline nlohmann::json to_json(const Network& net) {
  nlohmann::json j;
  j["activation"] = std::string(net.activation.name());
  j["layer_dims"] = net.layer_dims();
  j["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers) {
    nlohmann::json lj;
    lj["rows"] = l.weights.rows();
    lj["cols"] = l.weights.cols();
    std::vector<double> values;
    std::vector<int> mask;
    values.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Index i = 0; i < l.weights.rows(); ++i)
      for (Index c = 0; c < l.weights.cols(); ++c) {
        values.push_back(l.weights(i, c));
        mask.push_back(l.mask(i, c) ? 1 : 0);
      }
    lj["values"] = std::move(values);
    lj["mask"] = std::move(mask);
    j["layers"].push_back(std::move(lj));
  }
  return j;
}

inline Network network_from_json(const nlohmann::json& j) {
  Network net;
  try {
    net.activation = ActivationKind::parse(j.at("activation").get<std::string>());
    const auto dims = j.at("layer_dims").get<std::vector<Index>>();
    const auto& layers = j.at("layers");
    if (!layers.is_array()) throw DataError("weight file: 'layers' must be an array");
    if (dims.size() != layers.size() + 1)
      throw DataError("weight file: layer_dims has " + std::to_string(dims.size()) +
                      " entries but there are " + std::to_string(layers.size()) + " layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& lj = layers[k];
      const auto rows = lj.at("rows").get<Index>();
      const auto cols = lj.at("cols").get<Index>();
      if (rows != dims[k + 1] || cols != dims[k] + 1)
        throw DataError("weight file: layer " + std::to_string(k + 1) + " shape " + std::to_string(rows) +
                        "x" + std::to_string(cols) + " disagrees with layer_dims");
      const auto values = lj.at("values").get<std::vector<double>>();
      const auto mask = lj.at("mask").get<std::vector<int>>();
      if (static_cast<Index>(values.size()) != rows * cols || static_cast<Index>(mask.size()) != rows * cols)
        throw DataError("weight file: layer " + std::to_string(k + 1) + " has wrong value/mask count");
      LayerWeights l(MatrixXd(rows, cols));
      for (Index i = 0; i < rows; ++i)
        for (Index c = 0; c < cols; ++c) {
          const auto idx = static_cast<std::size_t>(i * cols + c);
          l.weights(i, c) = values[idx];
          l.mask(i, c) = mask[idx] != 0;
        }
      net.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("weight file: ") + e.what());
  }
  net.validate();
  return net;
}

inline void save_weights(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write weight file '" + path.string() + "'");
  out << to_json(net).dump() << '\n';
}

inline Network load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open weight file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("weight file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return network_from_json(j);
}

}  // namespace abp
