#pragma once

// Least-squares refits for per-neuron sparse approximation.
//
// LASSO objective: (1/2N) |y - Xw|^2 + lambda * sum_{j penalized} |w_j|.
// A constant column (all entries equal and nonzero) is left unpenalized unless
// `penalize_constant` is set; it is then profiled out by centering, which is an
// exact reparametrization of the same objective.

#include <abp/error.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace abp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct LassoConfig {
  double lambda = 0.0;
  double tol = 1e-8;       // relative coefficient change over a sweep
  double kkt_tol = 1e-10;  // stationarity, relative to sqrt(mean y^2 * max G_jj)
  int max_iter = 10000;
  bool penalize_constant = false;
  bool record_objective = false;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lasso: lambda must be finite and >= 0");
    if (!(tol > 0.0)) throw ConfigError("lasso: tol must be > 0");
    if (!(kkt_tol > 0.0)) throw ConfigError("lasso: kkt_tol must be > 0");
    if (max_iter < 1) throw ConfigError("lasso: max_iter must be >= 1");
  }
};

struct FitResult {
  VectorXd weights;
  std::vector<Index> support;
  int iterations = 0;
  bool converged = true;
  double objective = 0.0;
  std::vector<double> objective_history;  // per sweep, when requested
};

inline std::vector<Index> support_of(const VectorXd& w) {
  std::vector<Index> s;
  for (Index j = 0; j < w.size(); ++j)
    if (w(j) != 0.0) s.push_back(j);
  return s;
}

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

/// First column whose entries are all equal and nonzero.
inline std::optional<Index> find_constant_column(const MatrixXd& x) {
  if (x.rows() == 0) return std::nullopt;
  for (Index j = 0; j < x.cols(); ++j) {
    const double v = x(0, j);
    if (v != 0.0 && (x.col(j).array() == v).all()) return j;
  }
  return std::nullopt;
}

/// Minimum-l2-norm least-squares solution (pseudo-inverse applied to y).
inline FitResult ols_min_norm(const MatrixXd& x, const VectorXd& y) {
  if (x.rows() < 1 || x.cols() < 1) throw DimensionError("ols: design must be non-empty");
  if (x.rows() != y.size()) throw DimensionError("ols: row count and target length differ");
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(x);
  FitResult r;
  r.weights = cod.solve(y);
  r.support = support_of(r.weights);
  r.objective = 0.5 * (y - x * r.weights).squaredNorm() / static_cast<double>(x.rows());
  return r;
}

inline double lasso_objective(const MatrixXd& x, const VectorXd& y, const VectorXd& w, double lambda,
                              std::span<const Index> unpenalized = {}) {
  double penalty = 0.0;
  for (Index j = 0; j < w.size(); ++j)
    if (std::find(unpenalized.begin(), unpenalized.end(), j) == unpenalized.end()) penalty += std::abs(w(j));
  return 0.5 * (y - x * w).squaredNorm() / static_cast<double>(x.rows()) + lambda * penalty;
}

/// Largest violation of the LASSO stationarity conditions, r = y - Xw:
/// |X_j'r/N - lambda sign(w_j)| on the support, max(0, |X_j'r/N| - lambda) off it,
/// and |X_j'r/N| for unpenalized columns.
inline double kkt_violation(const MatrixXd& x, const VectorXd& y, const VectorXd& w, double lambda,
                            std::span<const Index> unpenalized = {}) {
  if (x.rows() != y.size() || x.cols() != w.size()) throw DimensionError("kkt_violation: shape mismatch");
  const VectorXd corr = x.transpose() * (y - x * w) / static_cast<double>(x.rows());
  double worst = 0.0;
  for (Index j = 0; j < w.size(); ++j) {
    double v;
    if (std::find(unpenalized.begin(), unpenalized.end(), j) != unpenalized.end())
      v = std::abs(corr(j));
    else if (w(j) != 0.0)
      v = std::abs(corr(j) - lambda * (w(j) > 0.0 ? 1.0 : -1.0));
    else
      v = std::max(0.0, std::abs(corr(j)) - lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

/// Second-moment summary of a design, shared across all right-hand sides
/// fitted against it. With an intercept column the remaining columns are
/// centred before forming X'X/N; subtracting mu mu' afterwards cancels badly
/// for near-constant columns with large means.
struct GramDesign {
  MatrixXd gram;      // X'X/N over `columns` (centred when there is an intercept)
  VectorXd col_means; // all d columns
  std::vector<Index> columns;  // penalized columns, ascending
  std::optional<Index> intercept;
  Index rows = 0;
  Index width = 0;

  GramDesign() = default;
  GramDesign(const MatrixXd& x, std::optional<Index> intercept_col)
      : col_means(x.colwise().mean().transpose()), intercept(intercept_col), rows(x.rows()), width(x.cols()) {
    for (Index j = 0; j < x.cols(); ++j)
      if (!intercept || j != *intercept) columns.push_back(j);
    const MatrixXd xs = reduced(x);
    gram = MatrixXd::Zero(xs.cols(), xs.cols());
    gram.selfadjointView<Eigen::Lower>().rankUpdate(xs.transpose(), 1.0 / static_cast<double>(rows));
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  }

  /// The penalized columns of x, centred when there is an intercept.
  MatrixXd reduced(const MatrixXd& x) const {
    MatrixXd xs(x.rows(), static_cast<Index>(columns.size()));
    for (Index a = 0; a < xs.cols(); ++a) {
      xs.col(a) = x.col(columns[a]);
      if (intercept) xs.col(a).array() -= col_means(columns[a]);
    }
    return xs;
  }
};

/// Right-hand-side summary matching a GramDesign: (reduced X)'y/N, mean(y)
/// and the (centred, with an intercept) mean square of y.
struct GramTarget {
  VectorXd xty;
  double y_mean = 0.0;
  double yy = 0.0;
};

inline GramTarget gram_target(const GramDesign& design, const MatrixXd& reduced_x, const VectorXd& y) {
  const auto n = static_cast<double>(y.size());
  GramTarget t;
  t.y_mean = y.mean();
  if (design.intercept) {
    const VectorXd yc = y.array() - t.y_mean;
    t.xty = reduced_x.transpose() * yc / n;
    t.yy = yc.squaredNorm() / n;
  } else {
    t.xty = reduced_x.transpose() * y / n;
    t.yy = y.squaredNorm() / n;
  }
  return t;
}

namespace detail {

// Minimizes 0.5 w'Gw - c'w + lambda |w|_1 (covariance form). Cyclic
// coordinate descent finds the active set; an exact solve on the active set
// with a sign-change line search (feature-sign step) then finishes the job,
// which CD alone does slowly on collinear, badly scaled columns. Stops when
// the KKT violation max_j |rho_j - lambda s_j| (rho = c - Gw) is at most
// kkt_tol * max(1, sqrt(yy * max G_jj)).
inline FitResult coordinate_descent(const MatrixXd& g, const VectorXd& c, double lambda, const LassoConfig& cfg,
                                    double yy) {
  const Index m = g.cols();
  FitResult r;
  r.weights = VectorXd::Zero(m);
  VectorXd& w = r.weights;
  VectorXd rho = c;

  const double diag_scale = m > 0 ? g.diagonal().cwiseAbs().maxCoeff() : 0.0;
  std::vector<char> usable(static_cast<std::size_t>(m));
  for (Index j = 0; j < m; ++j) usable[j] = g(j, j) > 1e-13 * std::max(diag_scale, 1e-300);
  const double kkt_tol = cfg.kkt_tol * std::max(1.0, std::sqrt(std::max(0.0, yy) * diag_scale));

  auto objective = [&]() { return 0.5 * yy - c.dot(w) + 0.5 * w.dot(g * w) + lambda * w.lpNorm<1>(); };
  auto record = [&]() {
    if (cfg.record_objective) r.objective_history.push_back(objective());
  };

  auto kkt = [&]() {
    double worst = 0.0;
    for (Index j = 0; j < m; ++j) {
      if (!usable[j]) continue;
      const double v = w(j) != 0.0 ? std::abs(rho(j) - (w(j) > 0.0 ? lambda : -lambda))
                                   : std::max(0.0, std::abs(rho(j)) - lambda);
      worst = std::max(worst, v);
    }
    return worst;
  };

  auto sweep = [&](bool active_only) {
    double max_delta = 0.0;
    for (Index j = 0; j < m; ++j) {
      if (!usable[j]) continue;
      if (active_only && w(j) == 0.0) continue;
      const double z = rho(j) + g(j, j) * w(j);
      const double updated = soft_threshold(z, lambda) / g(j, j);
      const double delta = updated - w(j);
      if (delta != 0.0) {
        rho.noalias() -= g.col(j) * delta;
        w(j) = updated;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    return max_delta;
  };

  auto small = [&](double max_delta) {
    const double scale = m > 0 ? w.cwiseAbs().maxCoeff() : 0.0;
    return max_delta <= cfg.tol * scale || max_delta == 0.0;
  };

  // One feature-sign step; returns false when it cannot lower the objective.
  auto polish = [&]() {
    std::vector<Index> act;
    for (Index j = 0; j < m; ++j)
      if (w(j) != 0.0) act.push_back(j);
    if (act.empty()) return false;
    const auto a = static_cast<Index>(act.size());
    MatrixXd gaa(a, a);
    VectorXd rhs(a), cur(a), sgn(a), ca(a);
    for (Index u = 0; u < a; ++u) {
      cur(u) = w(act[u]);
      ca(u) = c(act[u]);
      sgn(u) = cur(u) > 0.0 ? 1.0 : -1.0;
      rhs(u) = c(act[u]) - lambda * sgn(u);
      for (Index v = 0; v < a; ++v) gaa(u, v) = g(act[u], act[v]);
    }
    auto local = [&](const VectorXd& v) {
      return 0.5 * v.dot(gaa * v) - v.dot(ca) + lambda * v.lpNorm<1>();
    };
    const Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(gaa);
    if (cod.rank() < a && lambda > 0.0) {
      // Singular G_AA: along its null space the quadratic part is flat and the
      // l1 term falls linearly, so slide until a coefficient reaches zero.
      const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gaa);
      const double cut = 1e-12 * static_cast<double>(a) * std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
      VectorXd z = VectorXd::Zero(a);
      for (Index u = 0; u < a; ++u)
        if (std::abs(eig.eigenvalues()(u)) <= cut) z -= eig.eigenvectors().col(u) * eig.eigenvectors().col(u).dot(sgn);
      if (z.norm() > 1e-8 * std::sqrt(static_cast<double>(a))) {
        double t = std::numeric_limits<double>::infinity();
        Index hit = -1;
        for (Index u = 0; u < a; ++u)
          if (z(u) * sgn(u) < 0.0 && -cur(u) / z(u) < t) {
            t = -cur(u) / z(u);
            hit = u;
          }
        if (hit >= 0) {
          VectorXd v = cur + t * z;
          v(hit) = 0.0;
          for (Index u = 0; u < a; ++u)
            if (v(u) * sgn(u) < 0.0) v(u) = 0.0;
          if (local(v) < local(cur)) {
            for (Index u = 0; u < a; ++u) w(act[u]) = v(u);
            rho = c - g * w;
            return true;
          }
        }
      }
    }
    const VectorXd target = cod.solve(rhs);
    if (!target.allFinite()) return false;
    const VectorXd dir = target - cur;
    std::vector<double> steps{1.0};
    for (Index u = 0; u < a; ++u)
      if (dir(u) != 0.0) {
        const double t = -cur(u) / dir(u);
        if (t > 0.0 && t < 1.0) steps.push_back(t);
      }
    double best = local(cur);
    VectorXd best_v = cur;
    bool improved = false;
    for (double t : steps) {
      VectorXd v = cur + t * dir;
      for (Index u = 0; u < a; ++u)
        if (v(u) * sgn(u) <= 0.0 || (dir(u) != 0.0 && std::abs(t + cur(u) / dir(u)) <= 1e-15)) v(u) = 0.0;
      const double f = local(v);
      if (f < best) {
        best = f;
        best_v = v;
        improved = true;
      }
    }
    if (!improved) return false;
    for (Index u = 0; u < a; ++u) w(act[u]) = best_v(u);
    rho = c - g * w;
    return true;
  };

  r.converged = false;
  while (r.iterations < cfg.max_iter) {
    const double full = sweep(false);
    ++r.iterations;
    record();
    if (small(full) || kkt() <= kkt_tol) {
      rho = c - g * w;
      if (kkt() <= kkt_tol) {
        r.converged = true;
        break;
      }
    }
    for (int inner = 0; inner < 50 && r.iterations < cfg.max_iter; ++inner) {
      const double act = sweep(true);
      ++r.iterations;
      record();
      if (small(act)) break;
    }
    for (int step = 0; step < 4 * m + 4 && polish(); ++step) {
      if (kkt() <= kkt_tol) break;
    }
    if (kkt() <= kkt_tol) {
      r.converged = true;
      break;
    }
  }
  r.objective = objective();
  return r;
}

}  // namespace detail

/// LASSO by coordinate descent from precomputed second moments. Returns
/// weights over all d columns; the intercept (if any) is recovered from the
/// means. `objective` is the value of the LASSO objective.
inline FitResult lasso_cd(const GramDesign& design, const GramTarget& target, const LassoConfig& cfg) {
  cfg.validate();
  const auto p = static_cast<Index>(design.columns.size());
  if (target.xty.size() != p) throw DimensionError("lasso: target summary does not match design");
  if (!design.gram.allFinite() || !target.xty.allFinite() || !std::isfinite(target.yy))
    throw DataError("lasso: non-finite inputs");

  FitResult inner = detail::coordinate_descent(design.gram, target.xty, cfg.lambda, cfg, target.yy);
  FitResult r;
  r.weights = VectorXd::Zero(design.width);
  double fitted_mean = 0.0;
  for (Index a = 0; a < p; ++a) {
    r.weights(design.columns[a]) = inner.weights(a);
    fitted_mean += design.col_means(design.columns[a]) * inner.weights(a);
  }
  if (design.intercept) r.weights(*design.intercept) = (target.y_mean - fitted_mean) / design.col_means(*design.intercept);
  r.support = support_of(r.weights);
  r.iterations = inner.iterations;
  r.converged = inner.converged;
  r.objective = inner.objective;
  r.objective_history = std::move(inner.objective_history);
  return r;
}

inline FitResult lasso_cd(const MatrixXd& x, const VectorXd& y, const LassoConfig& cfg) {
  cfg.validate();
  if (x.rows() < 1 || x.cols() < 1) throw DimensionError("lasso: design must be non-empty");
  if (x.rows() != y.size()) throw DimensionError("lasso: row count and target length differ");
  if (!x.allFinite() || !y.allFinite()) throw DataError("lasso: non-finite inputs");
  const GramDesign design(x, cfg.penalize_constant ? std::nullopt : find_constant_column(x));
  FitResult r = lasso_cd(design, gram_target(design, design.reduced(x), y), cfg);
  std::vector<Index> unpen;
  if (design.intercept && !cfg.penalize_constant) unpen.push_back(*design.intercept);
  r.objective = lasso_objective(x, y, r.weights, cfg.lambda, unpen);
  return r;
}

/// Thin QR of a fixed design X = QR, reused for many targets and column
/// subsets. Since |X_S w - y|^2 = |R_S w - Q'y|^2 + (|y|^2 - |Q'y|^2), each
/// subset refit only touches the small factor R.
class ReducedDesign {
public:
  explicit ReducedDesign(const MatrixXd& x) : rows_(x.rows()), cols_(x.cols()), qr_(x) {
    const Index k = std::min(rows_, cols_);
    r_ = qr_.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  /// Q'Y restricted to the leading min(N, d) rows.
  MatrixXd project(const MatrixXd& y) const {
    if (y.rows() != rows_) throw DimensionError("ReducedDesign: target rows do not match design");
    MatrixXd full = qr_.householderQ().adjoint() * y;
    return full.topRows(r_.rows());
  }

  /// Min-norm least squares on the columns in `subset`; returns a length-d
  /// weight vector (zero off the subset) and the mean squared residual.
  FitResult fit_subset(std::span<const Index> subset, const VectorXd& qty, double y_sq_norm,
                       double* mse_out = nullptr) const {
    FitResult r;
    r.weights = VectorXd::Zero(cols_);
    const double perp = std::max(0.0, y_sq_norm - qty.squaredNorm());
    double resid = qty.squaredNorm();
    if (!subset.empty()) {
      MatrixXd a(r_.rows(), static_cast<Index>(subset.size()));
      for (Index s = 0; s < a.cols(); ++s) a.col(s) = r_.col(subset[s]);
      Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(a);
      const VectorXd sol = cod.solve(qty);
      for (Index s = 0; s < a.cols(); ++s) r.weights(subset[s]) = sol(s);
      resid = (a * sol - qty).squaredNorm();
    }
    const double mse = (resid + perp) / static_cast<double>(rows_);
    r.support = support_of(r.weights);
    r.objective = 0.5 * mse;
    if (mse_out) *mse_out = mse;
    return r;
  }

private:
  Index rows_;
  Index cols_;
  Eigen::HouseholderQR<MatrixXd> qr_;
  MatrixXd r_;
};

}  // namespace abp
