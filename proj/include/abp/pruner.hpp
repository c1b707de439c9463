#pragma once

// One-shot adaptive backward pruning. Layers are visited from the output
// towards the input; every neuron's incoming weights are replaced by a sparse
// linear fit of its pre-activation g_j^(k) on the previous layer's outputs
// f^(k-1) (constant neuron included), both taken from the original network.
//
// Per-neuron strategies:
//   AbpMagnitude  keep the top-m weights with m from the sparsity index, refit by least squares
//   AbpLasso      refit all weights with an l1 penalty
//   BaselineMagnitude  zero a fixed fraction of the smallest weights, no refit

#include <abp/dataset.hpp>
#include <abp/error.hpp>
#include <abp/network.hpp>
#include <abp/solvers.hpp>
#include <abp/sparsity.hpp>
#include <abp/trainer.hpp>

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace abp {

struct AbpMagnitude {
  double q = 0.5;
  double eta = 0.0;
};

struct AbpLasso {
  LassoConfig lasso;
};

struct BaselineMagnitude {
  double proportion = 0.5;
};

using PruneStrategy = std::variant<AbpMagnitude, AbpLasso, BaselineMagnitude>;

inline void validate(const PruneStrategy& s) {
  std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, AbpMagnitude>) {
          if (!(v.q > 0.0 && v.q < 1.0)) throw ConfigError("abp_m: q must lie in (0, 1)");
          if (!(v.eta >= 0.0)) throw ConfigError("abp_m: eta must be >= 0");
        } else if constexpr (std::is_same_v<T, AbpLasso>) {
          v.lasso.validate();
        } else {
          if (!(v.proportion >= 0.0 && v.proportion < 1.0))
            throw ConfigError("baseline: proportion must lie in [0, 1)");
        }
      },
      s);
}

inline std::string method_name(const PruneStrategy& s) {
  switch (s.index()) {
    case 0: return "ABP-M";
    case 1: return "ABP-L";
    default: return "Mag";
  }
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

inline std::string params_label(const PruneStrategy& s) {
  if (const auto* m = std::get_if<AbpMagnitude>(&s))
    return "eta=" + format_number(m->eta) + ";q=" + format_number(m->q);
  if (const auto* l = std::get_if<AbpLasso>(&s)) return "lambda=" + format_number(l->lasso.lambda);
  return "p=" + format_number(std::get<BaselineMagnitude>(s).proportion);
}

struct NeuronPruneRecord {
  Index layer = 0;   // k in 1..L
  Index neuron = 0;  // j, 0-based
  Index original_nonzeros = 0;
  Index kept = 0;          // nonzero incoming weights after pruning
  Index target_keep = 0;   // m selected by the strategy before refitting
  std::vector<Index> support;
  VectorXd new_weights;
  double refit_mse = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> achieved_eta;
  bool converged = true;
  int iterations = 0;
};

struct PruneReport {
  std::string strategy;
  std::vector<NeuronPruneRecord> records;
  Index total_params = 0;
  Index kept_params = 0;
  double compression_ratio = 0.0;  // +inf when nothing is kept
  double pruning_ratio = 0.0;
  std::vector<Index> layer_order;
};

struct PruneOptions {
  /// Subsample the trace to at most this many rows (seeded); all rows otherwise.
  std::optional<Index> max_rows;
  std::uint64_t seed = 0;
  /// Called with k as each layer starts.
  std::function<void(Index)> on_layer;
};

namespace detail {

inline NeuronPruneRecord finish_record(NeuronPruneRecord rec, const VectorRef& original) {
  rec.original_nonzeros = l0_norm(original);
  rec.support = support_of(rec.new_weights);
  rec.kept = static_cast<Index>(rec.support.size());
  return rec;
}

inline NeuronPruneRecord magnitude_refit(const VectorRef& w, const ReducedDesign& design, const VectorXd& qty,
                                         double y_sq_norm, double q, double eta) {
  NeuronPruneRecord rec;
  rec.new_weights = VectorXd::Zero(w.size());
  if (lq_norm(w, q) == 0.0) {
    rec.refit_mse = y_sq_norm / static_cast<double>(design.rows());
    return finish_record(std::move(rec), w);
  }
  const Index m = keep_count(w, q, eta);
  rec.target_keep = m;
  rec.achieved_eta = achieved_tail_ratio(w, m, q);
  const auto selected = top_m_indices(w, m);
  double fit_mse = 0.0;
  FitResult fit = design.fit_subset(selected, qty, y_sq_norm, &fit_mse);
  rec.new_weights = std::move(fit.weights);
  rec.refit_mse = fit_mse;
  return finish_record(std::move(rec), w);
}

// Mean squared residual from the second moments; w spans all d columns. With
// an intercept the intercept is at its optimum, so the centred form is exact.
inline double gram_mse(const GramDesign& design, const GramTarget& target, const VectorXd& w) {
  VectorXd wp(static_cast<Index>(design.columns.size()));
  for (Index a = 0; a < wp.size(); ++a) wp(a) = w(design.columns[static_cast<std::size_t>(a)]);
  return std::max(0.0, target.yy - 2.0 * target.xty.dot(wp) + wp.dot(design.gram * wp));
}

inline NeuronPruneRecord lasso_refit(const VectorRef& w, const GramDesign& design, const GramTarget& target,
                                     const LassoConfig& cfg) {
  FitResult fit = lasso_cd(design, target, cfg);
  NeuronPruneRecord rec;
  rec.refit_mse = gram_mse(design, target, fit.weights);
  rec.new_weights = std::move(fit.weights);
  rec.converged = fit.converged;
  rec.iterations = fit.iterations;
  rec = finish_record(std::move(rec), w);
  rec.target_keep = rec.kept;
  return rec;
}

inline void finalize_report(PruneReport& report, const Network& pruned) {
  const ParamCount c = count_params(pruned);
  report.total_params = c.total;
  report.kept_params = c.nonzero;
  report.compression_ratio = c.nonzero == 0 ? std::numeric_limits<double>::infinity()
                                            : compression_ratio(c.total, c.nonzero);
  report.pruning_ratio = pruning_ratio(c.total, c.nonzero);
}

inline void write_row(LayerWeights& layer, Index j, const VectorXd& w) {
  layer.weights.row(j) = w.transpose();
  for (Index c = 0; c < w.size(); ++c) layer.mask(j, c) = (w(c) == 0.0);
}

}  // namespace detail

/// Magnitude-based sparse approximation of one neuron. `features` is N x d
/// (constant column included), `targets` the neuron's pre-activations.
inline NeuronPruneRecord approx_neuron_magnitude(const VectorRef& w, const MatrixXd& features, const VectorXd& targets,
                                                 double q, double eta) {
  if (features.cols() != w.size()) throw DimensionError("approx_neuron_magnitude: weight length != feature columns");
  if (features.rows() != targets.size()) throw DimensionError("approx_neuron_magnitude: row count mismatch");
  validate(PruneStrategy{AbpMagnitude{q, eta}});
  const ReducedDesign design(features);
  const VectorXd qty = design.project(targets);
  return detail::magnitude_refit(w, design, qty, targets.squaredNorm(), q, eta);
}

/// LASSO-based sparse approximation of one neuron.
inline NeuronPruneRecord approx_neuron_lasso(const MatrixXd& features, const VectorXd& targets, const LassoConfig& cfg) {
  FitResult fit = lasso_cd(features, targets, cfg);
  NeuronPruneRecord rec;
  rec.refit_mse = (targets - features * fit.weights).squaredNorm() / static_cast<double>(targets.size());
  rec.new_weights = std::move(fit.weights);
  rec.converged = fit.converged;
  rec.iterations = fit.iterations;
  rec.support = support_of(rec.new_weights);
  rec.kept = static_cast<Index>(rec.support.size());
  rec.target_keep = rec.kept;
  rec.original_nonzeros = features.cols();
  return rec;
}

inline std::pair<Network, PruneReport> prune_abp(const Network& net, const MatrixXd& inputs,
                                                 const PruneStrategy& strategy, const PruneOptions& opts = {}) {
  if (std::holds_alternative<BaselineMagnitude>(strategy))
    throw ConfigError("prune_abp: use prune_baseline for the fixed-proportion baseline");
  validate(strategy);
  net.validate();
  if (inputs.rows() < 1) throw DataError("prune_abp: no data rows");

  MatrixXd x;
  if (opts.max_rows && *opts.max_rows < inputs.rows()) {
    std::vector<Index> rows(static_cast<std::size_t>(inputs.rows()));
    std::iota(rows.begin(), rows.end(), Index{0});
    std::mt19937_64 rng(opts.seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(static_cast<std::size_t>(*opts.max_rows));
    std::sort(rows.begin(), rows.end());
    x.resize(*opts.max_rows, inputs.cols());
    for (Index i = 0; i < x.rows(); ++i) x.row(i) = inputs.row(rows[i]);
  } else {
    x = inputs;
  }

  const ActivationTrace trace = forward_trace(net, x);
  Network out = net;
  PruneReport report;
  report.strategy = method_name(strategy) + "(" + params_label(strategy) + ")";

  for (Index k = net.depth(); k >= 1; --k) {
    if (opts.on_layer) opts.on_layer(k);
    report.layer_order.push_back(k);
    const MatrixXd features = trace.features_for(k);
    const MatrixXd& targets = trace.pre_activations[static_cast<std::size_t>(k)];
    const MatrixXd& weights = net.layers[static_cast<std::size_t>(k - 1)].weights;
    auto& layer = out.layers[static_cast<std::size_t>(k - 1)];
    std::vector<NeuronPruneRecord> layer_records;

    if (const auto* m = std::get_if<AbpMagnitude>(&strategy)) {
      const ReducedDesign design(features);
      const MatrixXd qty = design.project(targets);
      for (Index j = 0; j < weights.rows(); ++j)
        layer_records.push_back(detail::magnitude_refit(weights.row(j).transpose(), design, qty.col(j),
                                                        targets.col(j).squaredNorm(), m->q, m->eta));
    } else {
      const auto& cfg = std::get<AbpLasso>(strategy).lasso;
      const GramDesign design(features, cfg.penalize_constant ? std::nullopt
                                                              : std::optional<Index>(features.cols() - 1));
      const MatrixXd reduced = design.reduced(features);
      for (Index j = 0; j < weights.rows(); ++j) {
        const GramTarget t = gram_target(design, reduced, targets.col(j));
        layer_records.push_back(detail::lasso_refit(weights.row(j).transpose(), design, t, cfg));
      }
    }

    for (Index j = 0; j < weights.rows(); ++j) {
      auto& rec = layer_records[static_cast<std::size_t>(j)];
      rec.layer = k;
      rec.neuron = j;
      detail::write_row(layer, j, rec.new_weights);
      report.records.push_back(std::move(rec));
    }
  }
  detail::finalize_report(report, out);
  return {std::move(out), std::move(report)};
}

inline std::pair<Network, PruneReport> prune_abp(const Network& net, const Dataset& data,
                                                 const PruneStrategy& strategy, const PruneOptions& opts = {}) {
  return prune_abp(net, data.features, strategy, opts);
}

/// Zeroes floor(p * d) smallest-magnitude incoming weights of every neuron
/// (ties: the higher index goes first). Survivors are left unchanged.
inline std::pair<Network, PruneReport> prune_baseline(const Network& net, double proportion) {
  validate(PruneStrategy{BaselineMagnitude{proportion}});
  net.validate();
  Network out = net;
  PruneReport report;
  report.strategy = "Mag(p=" + format_number(proportion) + ")";
  for (Index k = net.depth(); k >= 1; --k) {
    report.layer_order.push_back(k);
    auto& layer = out.layers[static_cast<std::size_t>(k - 1)];
    const MatrixXd& weights = net.layers[static_cast<std::size_t>(k - 1)].weights;
    const Index d = weights.cols();
    const auto drop = static_cast<Index>(std::floor(proportion * static_cast<double>(d) + 1e-9));
    for (Index j = 0; j < weights.rows(); ++j) {
      const VectorXd w = weights.row(j).transpose();
      const auto order = magnitude_order(w);
      for (Index r = d - drop; r < d; ++r) layer.prune(j, order[static_cast<std::size_t>(r)]);
      NeuronPruneRecord rec;
      rec.layer = k;
      rec.neuron = j;
      rec.new_weights = layer.weights.row(j).transpose();
      rec = detail::finish_record(std::move(rec), w);
      rec.target_keep = d - drop;
      report.records.push_back(std::move(rec));
    }
  }
  detail::finalize_report(report, out);
  return {std::move(out), std::move(report)};
}

/// Dispatches to prune_abp or prune_baseline.
inline std::pair<Network, PruneReport> prune(const Network& net, const MatrixXd& inputs, const PruneStrategy& strategy,
                                             const PruneOptions& opts = {}) {
  if (const auto* b = std::get_if<BaselineMagnitude>(&strategy)) return prune_baseline(net, b->proportion);
  return prune_abp(net, inputs, strategy, opts);
}

struct PrunedEvaluation {
  double mse_original = 0.0;
  double mse_pruned = 0.0;
  double mse_increase_ratio = 0.0;
};

/// (mse_pruned - mse_original) / mse_original; may be negative.
inline PrunedEvaluation evaluate_pruned(const Network& original, const Network& pruned, const Dataset& data) {
  if (original.layer_dims() != pruned.layer_dims())
    throw DimensionError("evaluate_pruned: networks have different architectures");
  PrunedEvaluation e;
  e.mse_original = mse(original, data);
  e.mse_pruned = mse(pruned, data);
  if (e.mse_original == 0.0) throw ConfigError("evaluate_pruned: original MSE is zero, ratio undefined");
  e.mse_increase_ratio = (e.mse_pruned - e.mse_original) / e.mse_original;
  return e;
}

inline nlohmann::json to_json(const PruneReport& r, bool include_records = true) {
  nlohmann::json j;
  j["strategy"] = r.strategy;
  j["total_params"] = r.total_params;
  j["kept_params"] = r.kept_params;
  if (std::isfinite(r.compression_ratio))
    j["network_compression_ratio"] = r.compression_ratio;
  else
    j["network_compression_ratio"] = "inf";
  j["network_pruning_ratio"] = r.pruning_ratio;
  j["layer_order"] = r.layer_order;
  if (include_records) {
    j["records"] = nlohmann::json::array();
    for (const auto& rec : r.records) {
      nlohmann::json rj;
      rj["layer"] = rec.layer;
      rj["neuron"] = rec.neuron;
      rj["original_nonzeros"] = rec.original_nonzeros;
      rj["kept"] = rec.kept;
      rj["target_keep"] = rec.target_keep;
      rj["support"] = rec.support;
      std::vector<std::pair<Index, double>> sparse;
      for (Index s : rec.support) sparse.emplace_back(s, rec.new_weights(s));
      rj["new_weights"] = sparse;
      rj["refit_mse"] = std::isfinite(rec.refit_mse) ? nlohmann::json(rec.refit_mse) : nlohmann::json(nullptr);
      rj["achieved_eta"] = rec.achieved_eta ? nlohmann::json(*rec.achieved_eta) : nlohmann::json(nullptr);
      rj["converged"] = rec.converged;
      j["records"].push_back(std::move(rj));
    }
  }
  return j;
}

inline void write_records_csv(const PruneReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "layer,neuron,original_nonzeros,kept,refit_mse,achieved_eta\n" << std::setprecision(17);
  for (const auto& rec : r.records) {
    out << rec.layer << ',' << rec.neuron << ',' << rec.original_nonzeros << ',' << rec.kept << ',';
    if (std::isfinite(rec.refit_mse)) out << rec.refit_mse;
    out << ',';
    if (rec.achieved_eta) out << *rec.achieved_eta;
    out << '\n';
  }
}

}  // namespace abp
