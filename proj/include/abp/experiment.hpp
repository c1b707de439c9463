#pragma once

// Replicated train -> prune -> evaluate harness. Each replication draws a new
// split and a new initialization, trains f_T once, then applies every
// configured strategy to that same f_T.

#include <abp/dataset.hpp>
#include <abp/error.hpp>
#include <abp/network.hpp>
#include <abp/pruner.hpp>
#include <abp/trainer.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace abp {

struct SyntheticSpec {
  Index n = 2000;
  Index p = 8;
  Index sparsity = 3;
  double noise_sd = 0.1;
};

struct ExperimentConfig {
  std::string data_path;
  std::string target_column = "MedHouseVal";
  std::optional<SyntheticSpec> synthetic;  // used instead of data_path when set
  SplitFractions fractions{0.8, 0.1, 0.1};
  bool standardize_targets = false;
  std::uint64_t seed = 2022;
  std::vector<Index> hidden{64, 64, 64};
  ActivationKind activation{Activation::relu};
  TrainConfig train;
  std::vector<PruneStrategy> strategies;
  int replications = 20;
  std::optional<Index> prune_rows;
  std::string eval_split = "test";
  std::filesystem::path output_dir = "results";
  int threads = 0;  // 0: hardware concurrency

  Architecture architecture(Index inputs) const {
    Architecture a;
    a.dims.push_back(inputs);
    a.dims.insert(a.dims.end(), hidden.begin(), hidden.end());
    a.dims.push_back(1);
    a.activation = activation;
    return a;
  }

  void validate() const {
    if (replications < 1) throw ConfigError("experiment: replications must be >= 1");
    if (strategies.empty()) throw ConfigError("experiment: strategy grid is empty");
    if (eval_split != "test" && eval_split != "val" && eval_split != "train")
      throw ConfigError("experiment: eval_split must be train, val or test");
    train.validate();
    for (const auto& s : strategies) abp::validate(s);
    if (!synthetic && data_path.empty()) throw ConfigError("experiment: no dataset configured");
  }
};

inline const char* optimizer_name(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "sgd_momentum"; }

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["data"]["path"] = c.data_path;
  j["data"]["target"] = c.target_column;
  j["data"]["split"] = {c.fractions.train, c.fractions.val, c.fractions.test};
  j["data"]["standardize_targets"] = c.standardize_targets;
  if (c.synthetic)
    j["data"]["synthetic"] = {{"n", c.synthetic->n},
                              {"p", c.synthetic->p},
                              {"sparsity", c.synthetic->sparsity},
                              {"noise_sd", c.synthetic->noise_sd}};
  j["seed"] = c.seed;
  j["architecture"]["hidden"] = c.hidden;
  j["architecture"]["activation"] = std::string(c.activation.name());
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"optimizer", optimizer_name(c.train.optimizer)},
                {"momentum", c.train.momentum},
                {"init", "uniform_he"}};
  nlohmann::json strategies = nlohmann::json::array();
  for (const auto& s : c.strategies) {
    if (const auto* m = std::get_if<AbpMagnitude>(&s))
      strategies.push_back({{"method", "abp_m"}, {"q", m->q}, {"eta", m->eta}});
    else if (const auto* l = std::get_if<AbpLasso>(&s))
      strategies.push_back({{"method", "abp_l"},
                            {"lambda", l->lasso.lambda},
                            {"tol", l->lasso.tol},
                            {"kkt_tol", l->lasso.kkt_tol},
                            {"max_iter", l->lasso.max_iter},
                            {"penalize_constant", l->lasso.penalize_constant}});
    else
      strategies.push_back({{"method", "baseline"}, {"p", std::get<BaselineMagnitude>(s).proportion}});
  }
  j["strategies"] = strategies;
  j["replications"] = c.replications;
  j["prune_rows"] = c.prune_rows ? nlohmann::json(*c.prune_rows) : nlohmann::json(nullptr);
  j["eval_split"] = c.eval_split;
  j["output_dir"] = c.output_dir.string();
  j["threads"] = c.threads;
  return j;
}

/// Parses an experiment config. `strategies` is either the explicit list
/// written by to_json, or an object with any of
///   abp_m: [{q, eta}, ...], abp_m_grid: {q: [...], eta: [...]},
///   abp_l: {lambda: [...]}, baseline: {p: [...]}
/// plus an optional top-level "lasso" block of solver settings.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("data")) {
      const auto& d = j["data"];
      c.data_path = d.value("path", c.data_path);
      c.target_column = d.value("target", c.target_column);
      if (d.contains("split")) {
        const auto f = d["split"].get<std::vector<double>>();
        if (f.size() != 3) throw ConfigError("data.split must have three fractions");
        c.fractions = {f[0], f[1], f[2]};
      }
      c.standardize_targets = d.value("standardize_targets", false);
      if (d.contains("synthetic") && !d["synthetic"].is_null()) {
        SyntheticSpec s;
        const auto& sj = d["synthetic"];
        s.n = sj.value("n", s.n);
        s.p = sj.value("p", s.p);
        s.sparsity = sj.value("sparsity", s.sparsity);
        s.noise_sd = sj.value("noise_sd", s.noise_sd);
        c.synthetic = s;
      }
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("architecture")) {
      const auto& a = j["architecture"];
      if (a.contains("hidden")) c.hidden = a["hidden"].get<std::vector<Index>>();
      if (a.contains("activation")) c.activation = ActivationKind::parse(a["activation"].get<std::string>());
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.momentum = t.value("momentum", c.train.momentum);
      const std::string opt = t.value("optimizer", std::string(optimizer_name(c.train.optimizer)));
      if (opt == "sgd")
        c.train.optimizer = Optimizer::sgd;
      else if (opt == "sgd_momentum")
        c.train.optimizer = Optimizer::sgd_momentum;
      else
        throw ConfigError("unknown optimizer '" + opt + "'");
      if (t.value("init", std::string("uniform_he")) != "uniform_he")
        throw ConfigError("only uniform_he initialization is supported");
    }
    LassoConfig lasso;
    if (j.contains("lasso")) {
      const auto& l = j["lasso"];
      lasso.tol = l.value("tol", lasso.tol);
      lasso.kkt_tol = l.value("kkt_tol", lasso.kkt_tol);
      lasso.max_iter = l.value("max_iter", lasso.max_iter);
      lasso.penalize_constant = l.value("penalize_constant", lasso.penalize_constant);
    }
    if (j.contains("strategies")) {
      const auto& s = j["strategies"];
      if (s.is_array()) {
        for (const auto& e : s) {
          const auto method = e.at("method").get<std::string>();
          if (method == "abp_m") {
            c.strategies.emplace_back(AbpMagnitude{e.at("q").get<double>(), e.at("eta").get<double>()});
          } else if (method == "abp_l") {
            AbpLasso l{lasso};
            l.lasso.lambda = e.at("lambda").get<double>();
            l.lasso.tol = e.value("tol", l.lasso.tol);
            l.lasso.kkt_tol = e.value("kkt_tol", l.lasso.kkt_tol);
            l.lasso.max_iter = e.value("max_iter", l.lasso.max_iter);
            l.lasso.penalize_constant = e.value("penalize_constant", l.lasso.penalize_constant);
            c.strategies.emplace_back(l);
          } else if (method == "baseline") {
            c.strategies.emplace_back(BaselineMagnitude{e.at("p").get<double>()});
          } else {
            throw ConfigError("unknown strategy method '" + method + "'");
          }
        }
      } else {
        if (s.contains("abp_l"))
          for (double lam : s["abp_l"].at("lambda").get<std::vector<double>>()) {
            AbpLasso l{lasso};
            l.lasso.lambda = lam;
            c.strategies.emplace_back(l);
          }
        if (s.contains("abp_m"))
          for (const auto& e : s["abp_m"])
            c.strategies.emplace_back(AbpMagnitude{e.at("q").get<double>(), e.at("eta").get<double>()});
        if (s.contains("abp_m_grid")) {
          const auto qs = s["abp_m_grid"].at("q").get<std::vector<double>>();
          const auto etas = s["abp_m_grid"].at("eta").get<std::vector<double>>();
          for (double eta : etas)
            for (double q : qs) c.strategies.emplace_back(AbpMagnitude{q, eta});
        }
        if (s.contains("baseline"))
          for (double p : s["baseline"].at("p").get<std::vector<double>>())
            c.strategies.emplace_back(BaselineMagnitude{p});
      }
    }
    c.replications = j.value("replications", c.replications);
    if (j.contains("prune_rows") && !j["prune_rows"].is_null()) c.prune_rows = j["prune_rows"].get<Index>();
    c.eval_split = j.value("eval_split", c.eval_split);
    c.output_dir = j.value("output_dir", c.output_dir.string());
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid experiment config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

/// Dataset named by the config (CSV or synthetic), before splitting.
inline Dataset load_experiment_data(const ExperimentConfig& c) {
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    return synth_regression(s.n, s.p, s.sparsity, s.noise_sd, c.seed).data;
  }
  Dataset d = load_csv(c.data_path, c.target_column);
  validate(d);
  return d;
}

struct CellOutcome {
  double compression_ratio = std::numeric_limits<double>::quiet_NaN();
  double pruning_ratio = std::numeric_limits<double>::quiet_NaN();
  double mse_original = std::numeric_limits<double>::quiet_NaN();
  double mse_pruned = std::numeric_limits<double>::quiet_NaN();
  double mse_increase_ratio = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty on success

  bool ok() const { return error.empty(); }
};

struct ReplicationOutcome {
  int replication = 0;
  double train_mse = std::numeric_limits<double>::quiet_NaN();
  double eval_mse = std::numeric_limits<double>::quiet_NaN();
  std::vector<CellOutcome> cells;  // one per strategy, config order
  std::string error;               // training failure (all cells failed)
};

struct Summary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();  // sample stddev / sqrt(R)
};

inline Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  const auto n = static_cast<double>(v.size());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

struct CellSummary {
  std::string method;
  std::string params;
  PruneStrategy strategy;
  int completed = 0;
  int failed = 0;
  Summary compression_ratio;
  Summary pruning_ratio;
  Summary mse_increase;
};

struct ExperimentResult {
  std::vector<ReplicationOutcome> replications;
  std::vector<CellSummary> cells;
};

inline ReplicationOutcome run_replication(const ExperimentConfig& cfg, const Dataset& data, int rep) {
  ReplicationOutcome out;
  out.replication = rep;
  out.cells.resize(cfg.strategies.size());
  const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(rep);
  try {
    const DataSplit raw = split(data, cfg.fractions, seed);
    const ScalerParams scaler = fit_scaler(raw.train, cfg.standardize_targets);
    const Dataset train_set = scaler.apply(raw.train);
    const Dataset val_set = scaler.apply(raw.val);
    const Dataset test_set = scaler.apply(raw.test);
    const Dataset& eval_set = cfg.eval_split == "test" ? test_set : cfg.eval_split == "val" ? val_set : train_set;

    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const TrainResult trained = train(cfg.architecture(data.cols()), train_set, tc);
    out.train_mse = trained.log.back().train_mse;
    out.eval_mse = mse(trained.network, eval_set);

    PruneOptions opts;
    opts.max_rows = cfg.prune_rows;
    opts.seed = seed;
    for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
      CellOutcome& cell = out.cells[s];
      try {
        const auto [pruned, report] = prune(trained.network, train_set.features, cfg.strategies[s], opts);
        const PrunedEvaluation ev = evaluate_pruned(trained.network, pruned, eval_set);
        cell.compression_ratio = report.compression_ratio;
        cell.pruning_ratio = report.pruning_ratio;
        cell.mse_original = ev.mse_original;
        cell.mse_pruned = ev.mse_pruned;
        cell.mse_increase_ratio = ev.mse_increase_ratio;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  } catch (const std::exception& e) {
    out.error = e.what();
    for (auto& cell : out.cells) cell.error = std::string("replication failed: ") + e.what();
  }
  return out;
}

inline std::vector<CellSummary> aggregate(const ExperimentConfig& cfg, const std::vector<ReplicationOutcome>& reps) {
  std::vector<CellSummary> cells;
  for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
    CellSummary c;
    c.method = method_name(cfg.strategies[s]);
    c.params = params_label(cfg.strategies[s]);
    c.strategy = cfg.strategies[s];
    std::vector<double> cr, pr, inc;
    for (const auto& r : reps) {
      const CellOutcome& o = r.cells[s];
      if (!o.ok()) {
        ++c.failed;
        continue;
      }
      ++c.completed;
      cr.push_back(o.compression_ratio);
      pr.push_back(o.pruning_ratio);
      inc.push_back(o.mse_increase_ratio);
    }
    c.compression_ratio = summarize(cr);
    c.pruning_ratio = summarize(pr);
    c.mse_increase = summarize(inc);
    cells.push_back(std::move(c));
  }
  return cells;
}

/// Runs all replications (concurrently when threads allow); results are
/// ordered by replication index regardless of scheduling.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& data,
                                       const std::function<void(const ReplicationOutcome&)>& on_done = {}) {
  cfg.validate();
  ExperimentResult result;
  result.replications.resize(static_cast<std::size_t>(cfg.replications));
  unsigned workers = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::thread::hardware_concurrency();
  workers = std::clamp<unsigned>(workers, 1, static_cast<unsigned>(cfg.replications));

  std::atomic<int> next{0};
  std::mutex report_mutex;
  auto worker = [&]() {
    for (int rep = next++; rep < cfg.replications; rep = next++) {
      ReplicationOutcome o = run_replication(cfg, data, rep);
      if (on_done) {
        std::lock_guard lock(report_mutex);
        on_done(o);
      }
      result.replications[static_cast<std::size_t>(rep)] = std::move(o);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  result.cells = aggregate(cfg, result.replications);
  return result;
}

namespace detail {

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

inline void write_results_csv(const std::vector<CellSummary>& cells, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "method,params,compression_ratio_mean,compression_ratio_se,pruning_ratio_mean,pruning_ratio_se,"
         "mse_increase_mean,mse_increase_se,completed,failed\n";
  for (const auto& c : cells) {
    using detail::csv_number;
    out << c.method << ',' << c.params << ',' << csv_number(c.compression_ratio.mean) << ','
        << csv_number(c.compression_ratio.se) << ',' << csv_number(c.pruning_ratio.mean) << ','
        << csv_number(c.pruning_ratio.se) << ',' << csv_number(c.mse_increase.mean) << ','
        << csv_number(c.mse_increase.se) << ',' << c.completed << ',' << c.failed << '\n';
  }
}

inline void write_replications_csv(const ExperimentConfig& cfg, const std::vector<ReplicationOutcome>& reps,
                                   const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "method,params,replication,compression_ratio,pruning_ratio,mse_original,mse_pruned,mse_increase_ratio,"
         "error\n";
  for (std::size_t s = 0; s < cfg.strategies.size(); ++s)
    for (const auto& r : reps) {
      using detail::csv_number;
      const CellOutcome& o = r.cells[s];
      std::string err = o.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      out << method_name(cfg.strategies[s]) << ',' << params_label(cfg.strategies[s]) << ',' << r.replication << ','
          << csv_number(o.compression_ratio) << ',' << csv_number(o.pruning_ratio) << ','
          << csv_number(o.mse_original) << ',' << csv_number(o.mse_pruned) << ','
          << csv_number(o.mse_increase_ratio) << ',' << err << '\n';
    }
}

inline std::string format_table(const std::vector<CellSummary>& cells) {
  auto cell = [](const Summary& s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << s.mean << " (" << s.se << ")";
    return os.str();
  };
  std::ostringstream os;
  os << std::left << std::setw(28) << "Method" << std::setw(20) << "Compression Ratio" << std::setw(18)
     << "Pruning Ratio" << "MSE Increase Ratio\n";
  for (const auto& c : cells) {
    os << std::left << std::setw(28) << (c.method + " (" + c.params + ")") << std::setw(20)
       << cell(c.compression_ratio) << std::setw(18) << cell(c.pruning_ratio) << cell(c.mse_increase);
    if (c.failed > 0) os << "  [" << c.failed << " failed]";
    os << '\n';
  }
  return os.str();
}

/// Writes results.csv, replications.csv, table.txt and effective_config.json.
inline void write_experiment_outputs(const ExperimentConfig& cfg, const ExperimentResult& result) {
  std::filesystem::create_directories(cfg.output_dir);
  write_results_csv(result.cells, cfg.output_dir / "results.csv");
  write_replications_csv(cfg, result.replications, cfg.output_dir / "replications.csv");
  std::ofstream(cfg.output_dir / "table.txt") << format_table(result.cells);
  nlohmann::json eff = to_json(cfg);
  eff["notes"] = {"MSE increase ratio evaluated on the '" + cfg.eval_split + "' split",
                  "hidden widths, activation and training schedule are configuration assumptions",
                  "features standardized with training-split statistics (population stddev)"};
  std::ofstream(cfg.output_dir / "effective_config.json") << eff.dump(2) << '\n';
}

}  // namespace abp
