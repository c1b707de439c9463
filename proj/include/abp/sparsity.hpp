#pragma once

// Norms, the sparsity index SI_q(w) = |w|_1 / |w|_q, the keep-count rule
// derived from it, and compression metrics.

#include <abp/error.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace abp {

using Eigen::Index;
using Eigen::VectorXd;
using VectorRef = Eigen::Ref<const VectorXd>;

/// (sum |w_i|^q)^(1/q) for q in (0, 1]. Factored through max|w| so that small
/// q does not overflow.
inline double lq_norm(const VectorRef& w, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("lq_norm: q must lie in (0, 1], got " + std::to_string(q));
  if (w.size() == 0) return 0.0;
  const double peak = w.cwiseAbs().maxCoeff();
  if (peak == 0.0) return 0.0;
  if (q == 1.0) return w.cwiseAbs().sum();
  double acc = 0.0;
  for (Index i = 0; i < w.size(); ++i) acc += std::pow(std::abs(w(i)) / peak, q);
  return peak * std::pow(acc, 1.0 / q);
}

inline double l1_norm(const VectorRef& w) { return w.cwiseAbs().sum(); }

inline Index l0_norm(const VectorRef& w) { return (w.array() != 0.0).count(); }

/// Empty when w == 0.
inline std::optional<double> sparsity_index(const VectorRef& w, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("sparsity_index: q must lie in (0, 1)");
  const double lq = lq_norm(w, q);
  if (lq == 0.0) return std::nullopt;
  return l1_norm(w) / lq;
}

/// Real-valued lower bound SI^(-q/(1-q)) (1+eta)^(-1/(1-q)) before rounding.
inline double keep_count_bound(double si, double q, double eta) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("keep_count: q must lie in (0, 1)");
  if (!(eta >= 0.0)) throw ConfigError("keep_count: eta must be >= 0");
  return std::pow(si, -q / (1.0 - q)) * std::pow(1.0 + eta, -1.0 / (1.0 - q));
}

/// m = clamp(ceil(bound), 1, d). A relative slack of 1e-12 absorbs roundoff
/// so that exact integer bounds (one-hot or uniform vectors) are not bumped up.
inline Index keep_count(const VectorRef& w, double q, double eta) {
  const auto si = sparsity_index(w, q);
  if (!si) throw ConfigError("keep_count: weight vector is zero");
  const double bound = keep_count_bound(*si, q, eta);
  const double m = std::ceil(bound * (1.0 - 1e-12));
  return std::clamp<Index>(static_cast<Index>(m), 1, w.size());
}

inline double compression_ratio(Index total, Index kept) {
  if (total < 1 || kept < 0 || kept > total) throw ConfigError("compression_ratio: need 0 <= kept <= total, total >= 1");
  if (kept == 0) throw ConfigError("compression_ratio: kept == 0 gives an infinite ratio");
  return static_cast<double>(total) / static_cast<double>(kept);
}

inline double pruning_ratio(Index total, Index kept) {
  if (total < 1 || kept < 0 || kept > total) throw ConfigError("pruning_ratio: need 0 <= kept <= total, total >= 1");
  return 1.0 - static_cast<double>(kept) / static_cast<double>(total);
}

/// Indices sorted by decreasing |w_i|, ties broken by ascending index.
inline std::vector<Index> magnitude_order(const VectorRef& w) {
  std::vector<Index> idx(static_cast<std::size_t>(w.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return std::abs(w(a)) > std::abs(w(b)); });
  return idx;
}

/// The m largest-magnitude indices, returned in ascending index order.
inline std::vector<Index> top_m_indices(const VectorRef& w, Index m) {
  auto order = magnitude_order(w);
  order.resize(static_cast<std::size_t>(std::clamp<Index>(m, 0, w.size())));
  std::sort(order.begin(), order.end());
  return order;
}

/// sum_{i not in I_m} |w_i|^q / sum_{i in I_m} |w_i|^q with I_m the top-m set.
inline double achieved_tail_ratio(const VectorRef& w, Index m, double q) {
  if (m < 1 || m > w.size()) throw ConfigError("achieved_tail_ratio: need 1 <= m <= d");
  const auto order = magnitude_order(w);
  double head = 0.0, tail = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const double v = std::pow(std::abs(w(order[r])), q);
    (static_cast<Index>(r) < m ? head : tail) += v;
  }
  if (tail == 0.0) return 0.0;
  if (head == 0.0) return std::numeric_limits<double>::infinity();
  return tail / head;
}

struct SparsityProfile {
  Index length = 0;
  double q = 0.5;
  double lq = 0.0;
  double l1 = 0.0;
  Index l0 = 0;
  std::optional<double> si;
};

inline SparsityProfile profile(const VectorRef& w, double q) {
  SparsityProfile p;
  p.length = w.size();
  p.q = q;
  p.lq = lq_norm(w, q);
  p.l1 = l1_norm(w);
  p.l0 = l0_norm(w);
  p.si = sparsity_index(w, q);
  return p;
}

}  // namespace abp
