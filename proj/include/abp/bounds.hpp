#pragma once

// Evaluators for the l_q-norm error bounds of a backward-pruned network.
//
// Layers are indexed k = 0..L-1 by their *input* side: t_k is the largest
// l_{q_k} norm over the incoming weight vectors of layer k+1, m_k the number of
// layer-k neurons kept per neuron of layer k+1, and max_f_norm_k the largest
// empirical L2 norm of a layer-k neuron. The constant neuron is part of every
// layer (its weight is part of each weight vector and its L2 norm is 1).
//
// Step s (1 <= s <= S) contributes
//   rho^(s-1) C (t_{L-1} ... t_{L-s}) m_{L-s}^(a - 1/q_{L-s}) max_f_norm_{L-s}
// with a = 1/2 for the best-approximation bound and a = 1 (C = 1) for the
// magnitude-pruning bound.

#include <abp/error.hpp>
#include <abp/network.hpp>
#include <abp/sparsity.hpp>

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace abp {

struct LayerStats {
  std::vector<double> t;             // t_k
  std::vector<double> q;             // q_k
  std::vector<Index> n;              // basis functions feeding layer k+1 (n_k + 1)
  std::vector<double> max_f_norm;    // max_j sqrt(mean_i f_j^(k)(X_i)^2)

  Index depth() const { return static_cast<Index>(t.size()); }
};

enum class TNormScope {
  all_neurons,      // max over every neuron of layer k+1
  surviving_neurons // max over neurons of layer k+1 still connected in a pruned model
};

/// `q` holds one value per layer, or a single value used for every layer.
inline LayerStats layer_stats(const Network& net, const MatrixXd& inputs, const std::vector<double>& q,
                              TNormScope scope = TNormScope::all_neurons, const Network* pruned = nullptr) {
  net.validate();
  const Index depth = net.depth();
  if (q.size() != 1 && static_cast<Index>(q.size()) != depth)
    throw ConfigError("layer_stats: need one q or one q per layer");
  if (scope == TNormScope::surviving_neurons) {
    if (!pruned) throw ConfigError("layer_stats: surviving-neuron scope needs the pruned network");
    if (pruned->layer_dims() != net.layer_dims()) throw DimensionError("layer_stats: pruned architecture differs");
  }
  const ActivationTrace trace = forward_trace(net, inputs);
  LayerStats s;
  for (Index k = 0; k < depth; ++k) {
    const double qk = q.size() == 1 ? q.front() : q[static_cast<std::size_t>(k)];
    if (!(qk > 0.0 && qk <= 1.0)) throw ConfigError("layer_stats: q must lie in (0, 1]");
    const MatrixXd& w = net.layers[static_cast<std::size_t>(k)].weights;
    double t = 0.0;
    for (Index i = 0; i < w.rows(); ++i) {
      if (scope == TNormScope::surviving_neurons && k + 1 < depth) {
        const MatrixXd& next = pruned->layers[static_cast<std::size_t>(k + 1)].weights;
        if ((next.col(i).array() == 0.0).all()) continue;
      }
      t = std::max(t, lq_norm(w.row(i).transpose(), qk));
    }
    const MatrixXd& f = trace.outputs[static_cast<std::size_t>(k)];
    double fmax = 1.0;  // constant neuron
    if (f.rows() > 0)
      for (Index j = 0; j < f.cols(); ++j)
        fmax = std::max(fmax, std::sqrt(f.col(j).squaredNorm() / static_cast<double>(f.rows())));
    s.t.push_back(t);
    s.q.push_back(qk);
    s.n.push_back(w.cols());
    s.max_f_norm.push_back(fmax);
  }
  return s;
}

struct BoundInput {
  LayerStats stats;
  std::vector<Index> m;   // m_k, k = 0..L-1
  Index steps = 1;        // S
  double rho = 1.0;
  double C = 1.0;
  double base_error = 0.0;  // |f - f_T|_2, unknown in practice

  void validate() const {
    const Index depth = stats.depth();
    if (depth < 1) throw ConfigError("bound: empty layer statistics");
    if (static_cast<Index>(stats.q.size()) != depth || static_cast<Index>(stats.max_f_norm.size()) != depth ||
        static_cast<Index>(stats.n.size()) != depth)
      throw DimensionError("bound: layer statistics have inconsistent lengths");
    if (static_cast<Index>(m.size()) != depth) throw DimensionError("bound: need one m_k per layer");
    if (steps < 1 || steps > depth) throw ConfigError("bound: S must lie in [1, L]");
    for (Index k = 0; k < depth; ++k) {
      if (m[static_cast<std::size_t>(k)] < 1) throw ConfigError("bound: m_k must be >= 1");
      if (m[static_cast<std::size_t>(k)] > stats.n[static_cast<std::size_t>(k)])
        throw ConfigError("bound: m_k exceeds the layer width");
    }
    if (!(rho > 0.0) || !(C >= 0.0) || !(base_error >= 0.0)) throw ConfigError("bound: rho > 0, C >= 0, base_error >= 0");
  }
};

struct BoundBreakdown {
  std::string variant;
  std::vector<double> per_step_terms;
  double base = 0.0;
  double total = 0.0;
  double C = 1.0;
  double rho = 1.0;
  Index steps = 1;
};

namespace detail {

inline std::vector<double> step_terms(const BoundInput& in, double exponent_offset, double c) {
  in.validate();
  const Index depth = in.stats.depth();
  std::vector<double> terms;
  double t_product = 1.0;
  for (Index s = 1; s <= in.steps; ++s) {
    const auto k = static_cast<std::size_t>(depth - s);
    t_product *= in.stats.t[k];
    const double m_term = std::pow(static_cast<double>(in.m[k]), exponent_offset - 1.0 / in.stats.q[k]);
    terms.push_back(std::pow(in.rho, static_cast<double>(s - 1)) * c * t_product * m_term * in.stats.max_f_norm[k]);
  }
  return terms;
}

inline BoundBreakdown assemble(std::string variant, std::vector<double> terms, double base, const BoundInput& in,
                               double c) {
  BoundBreakdown b;
  b.variant = std::move(variant);
  b.base = base;
  b.total = base;
  for (double t : terms) b.total += t;
  b.per_step_terms = std::move(terms);
  b.C = c;
  b.rho = in.rho;
  b.steps = in.steps;
  return b;
}

}  // namespace detail

inline BoundBreakdown theorem1_breakdown(const BoundInput& in) {
  return detail::assemble("theorem1", detail::step_terms(in, 0.5, in.C), in.base_error, in, in.C);
}

inline double theorem1_bound(const BoundInput& in) { return theorem1_breakdown(in).total; }

/// Magnitude-pruning bound: exponent 1 - 1/q and no universal constant.
inline BoundBreakdown magnitude_breakdown(const BoundInput& in) {
  return detail::assemble("magnitude", detail::step_terms(in, 1.0, 1.0), in.base_error, in, 1.0);
}

inline double magnitude_bound(const BoundInput& in) { return magnitude_breakdown(in).total; }

/// Excess 0-1 risk bound for binary classification: 2 |f* - f_T|_2 plus the
/// same step terms as the regression bound.
inline BoundBreakdown classification_breakdown(const BoundInput& in, double base_l2) {
  if (!(base_l2 >= 0.0)) throw ConfigError("classification bound: base_l2 must be >= 0");
  return detail::assemble("classification", detail::step_terms(in, 0.5, in.C), 2.0 * base_l2, in, in.C);
}

inline double classification_bound(const BoundInput& in, double base_l2) {
  return classification_breakdown(in, base_l2).total;
}

/// Homogeneous pruning (q_k = q, m_k = m, rho = 1, unit neuron norms):
/// base + C (t_{L-1} + t_{L-1} t_{L-2} + ... ) m^(1/2 - 1/q). `t` is indexed k = 0..L-1.
inline double corollary_bound(const std::vector<double>& t, Index m, double q, Index steps, double C,
                              double base_error = 0.0) {
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("corollary bound: q must lie in (0, 1]");
  if (m < 1) throw ConfigError("corollary bound: m must be >= 1");
  const auto depth = static_cast<Index>(t.size());
  if (steps < 1 || steps > depth) throw ConfigError("corollary bound: S must lie in [1, L]");
  double sum = 0.0, product = 1.0;
  for (Index s = 1; s <= steps; ++s) {
    product *= t[static_cast<std::size_t>(depth - s)];
    sum += product;
  }
  return base_error + C * sum * std::pow(static_cast<double>(m), 0.5 - 1.0 / q);
}

/// Smallest keep-count over the neurons of each layer (zero rows skipped),
/// as used by the magnitude-pruning bound. Layers with no nonzero rows get 1.
inline std::vector<Index> magnitude_keep_counts(const Network& net, const std::vector<double>& q, double eta) {
  std::vector<Index> m;
  for (Index k = 0; k < net.depth(); ++k) {
    const double qk = q.size() == 1 ? q.front() : q.at(static_cast<std::size_t>(k));
    const MatrixXd& w = net.layers[static_cast<std::size_t>(k)].weights;
    Index best = w.cols();
    bool any = false;
    for (Index i = 0; i < w.rows(); ++i) {
      const VectorXd row = w.row(i).transpose();
      if (l0_norm(row) == 0) continue;
      best = std::min(best, keep_count(row, qk, eta));
      any = true;
    }
    m.push_back(any ? best : 1);
  }
  return m;
}

inline nlohmann::json to_json(const BoundBreakdown& b) {
  nlohmann::json j;
  j["variant"] = b.variant;
  j["per_step_terms"] = b.per_step_terms;
  j["base"] = b.base;
  j["total"] = b.total;
  j["C"] = b.C;
  j["rho"] = b.rho;
  j["S"] = b.steps;
  return j;
}

}  // namespace abp
