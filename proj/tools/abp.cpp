// abp: train, prune, bound and experiment front end.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error (bad flags, missing
// or unreadable input files, invalid configuration values).

#include <abp/abp.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by train and experiment; unset options leave the config alone.
struct ConfigOverrides {
  std::string config;
  std::optional<std::string> data;
  std::optional<std::string> target;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::string> optimizer;
  std::optional<std::vector<Eigen::Index>> hidden;
  std::optional<std::string> activation;
  bool standardize_targets = false;
  std::optional<std::string> out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON experiment config")->check(CLI::ExistingFile);
    cmd->add_option("--data", data, "CSV dataset (overrides data.path)")->check(CLI::ExistingFile);
    cmd->add_option("--target", target, "target column name");
    cmd->add_option("--seed", seed, "split/training seed");
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--batch-size", batch_size);
    cmd->add_option("--lr", learning_rate, "learning rate");
    cmd->add_option("--optimizer", optimizer)->check(CLI::IsMember({"sgd", "sgd_momentum"}));
    cmd->add_option("--hidden", hidden, "hidden layer widths")->delimiter(',');
    cmd->add_option("--activation", activation)->check(CLI::IsMember({"relu", "sigmoid", "tanh", "identity"}));
    cmd->add_flag("--standardize-targets", standardize_targets);
    cmd->add_option("--out", out, "output directory");
  }

  abp::ExperimentConfig resolve() const {
    abp::ExperimentConfig c = config.empty() ? abp::ExperimentConfig{} : abp::load_experiment_config(config);
    if (data) {
      c.data_path = *data;
      c.synthetic.reset();
    }
    if (target) c.target_column = *target;
    if (seed) c.seed = *seed;
    if (epochs) c.train.epochs = *epochs;
    if (batch_size) c.train.batch_size = *batch_size;
    if (learning_rate) c.train.learning_rate = *learning_rate;
    if (optimizer) c.train.optimizer = *optimizer == "sgd" ? abp::Optimizer::sgd : abp::Optimizer::sgd_momentum;
    if (hidden) c.hidden = *hidden;
    if (activation) c.activation = abp::ActivationKind::parse(*activation);
    if (standardize_targets) c.standardize_targets = true;
    if (out) c.output_dir = *out;
    return c;
  }
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw abp::DataError("cannot write '" + path.string() + "'");
  f << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open '" + path.string() + "'");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw UsageError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

abp::Dataset load_inputs(const std::string& data, const std::string& target, const std::string& scaler) {
  abp::Dataset d = abp::load_csv(data, target);
  abp::validate(d);
  if (!scaler.empty()) d = abp::scaler_from_json(read_json(scaler)).apply(d);
  return d;
}

int cmd_train(const ConfigOverrides& o, bool save_splits) {
  abp::ExperimentConfig cfg = o.resolve();
  if (!cfg.synthetic && cfg.data_path.empty()) throw UsageError("train: no dataset (use --data or --config)");
  cfg.train.validate();
  if (!cfg.synthetic && !fs::exists(cfg.data_path)) throw UsageError("train: data file '" + cfg.data_path + "' not found");

  const abp::Dataset data = abp::load_experiment_data(cfg);
  const abp::DataSplit raw = abp::split(data, cfg.fractions, cfg.seed);
  const abp::ScalerParams scaler = abp::fit_scaler(raw.train, cfg.standardize_targets);
  const abp::Dataset train_set = scaler.apply(raw.train);
  const abp::Dataset val_set = scaler.apply(raw.val);

  abp::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const abp::TrainResult res = abp::train(cfg.architecture(data.cols()), train_set, tc, &val_set);

  fs::create_directories(cfg.output_dir);
  abp::save_weights(res.network, cfg.output_dir / "weights.json");
  write_json(cfg.output_dir / "scaler.json", abp::to_json(scaler));
  abp::write_training_log(res.log, cfg.output_dir / "train_log.csv");
  json eff = abp::to_json(cfg);
  eff["command"] = "train";
  write_json(cfg.output_dir / "effective_config.json", eff);
  if (cfg.synthetic) abp::save_csv(data, cfg.output_dir / "data.csv");
  if (save_splits) {
    abp::save_csv(raw.train, cfg.output_dir / "train.csv");
    abp::save_csv(raw.val, cfg.output_dir / "val.csv");
    abp::save_csv(raw.test, cfg.output_dir / "test.csv");
  }

  const auto& last = res.log.back();
  std::printf("trained %d epochs: train_mse=%.6g val_mse=%.6g\n", last.epoch, last.train_mse, last.val_mse);
  std::printf("wrote %s\n", (cfg.output_dir / "weights.json").string().c_str());
  return 0;
}

struct PruneArgs {
  std::string weights, data, target = "MedHouseVal", scaler, out = "prune_out";
  bool abp_m = false, abp_l = false, baseline = false;
  std::optional<double> q, eta, lambda, p;
  std::optional<Eigen::Index> rows;
  std::uint64_t seed = 0;
};

abp::PruneStrategy strategy_from(const PruneArgs& a) {
  const int chosen = int(a.abp_m) + int(a.abp_l) + int(a.baseline);
  if (chosen != 1) throw UsageError("prune: choose exactly one of --abp-m, --abp-l, --baseline");
  auto forbid = [](bool present, const char* flag, const char* method) {
    if (present) throw UsageError(std::string("prune: ") + flag + " does not apply to " + method);
  };
  if (a.abp_m) {
    forbid(a.lambda.has_value(), "--lambda", "--abp-m");
    forbid(a.p.has_value(), "--p", "--abp-m");
    if (!a.q) throw UsageError("prune: --abp-m needs --q");
    return abp::AbpMagnitude{*a.q, a.eta.value_or(0.0)};
  }
  if (a.abp_l) {
    forbid(a.q.has_value(), "--q", "--abp-l");
    forbid(a.eta.has_value(), "--eta", "--abp-l");
    forbid(a.p.has_value(), "--p", "--abp-l");
    if (!a.lambda) throw UsageError("prune: --abp-l needs --lambda");
    abp::AbpLasso l;
    l.lasso.lambda = *a.lambda;
    return l;
  }
  forbid(a.q.has_value(), "--q", "--baseline");
  forbid(a.eta.has_value(), "--eta", "--baseline");
  forbid(a.lambda.has_value(), "--lambda", "--baseline");
  if (!a.p) throw UsageError("prune: --baseline needs --p");
  return abp::BaselineMagnitude{*a.p};
}

int cmd_prune(const PruneArgs& a) {
  const abp::PruneStrategy strategy = strategy_from(a);
  abp::validate(strategy);
  const abp::Network net = abp::load_weights(a.weights);
  const abp::Dataset data = load_inputs(a.data, a.target, a.scaler);
  if (data.cols() != net.input_width()) throw abp::DimensionError("prune: data width does not match the network");

  abp::PruneOptions opts;
  opts.max_rows = a.rows;
  opts.seed = a.seed;
  const auto [pruned, report] = abp::prune(net, data.features, strategy, opts);

  const fs::path out = a.out;
  fs::create_directories(out);
  abp::save_weights(pruned, out / "pruned_weights.json");
  json rj = abp::to_json(report);
  const double base = abp::mse(net, data);
  if (base > 0.0) {
    const abp::PrunedEvaluation ev = abp::evaluate_pruned(net, pruned, data);
    rj["evaluation"] = {{"mse_original", ev.mse_original},
                        {"mse_pruned", ev.mse_pruned},
                        {"mse_increase_ratio", ev.mse_increase_ratio}};
  }
  write_json(out / "prune_report.json", rj);
  abp::write_records_csv(report, out / "prune_records.csv");

  std::printf("%s: kept %lld of %lld weights, compression ratio %.4g, pruning ratio %.4g\n", report.strategy.c_str(),
              static_cast<long long>(report.kept_params), static_cast<long long>(report.total_params),
              report.compression_ratio, report.pruning_ratio);
  if (rj.contains("evaluation"))
    std::printf("mse %.6g -> %.6g (increase ratio %.4g)\n", rj["evaluation"]["mse_original"].get<double>(),
                rj["evaluation"]["mse_pruned"].get<double>(), rj["evaluation"]["mse_increase_ratio"].get<double>());
  return 0;
}

struct BoundArgs {
  std::string weights, data, target = "MedHouseVal", scaler, pruned, out;
  std::string variant = "theorem1", scope = "all";
  std::optional<Eigen::Index> steps;
  std::vector<double> q{0.5};
  std::vector<Eigen::Index> m;
  double C = 1.0, rho = 1.0, eta = 0.0, base_error = 0.0;
};

int cmd_bound(const BoundArgs& a) {
  for (double q : a.q)
    if (!(q > 0.0 && q <= 1.0)) throw UsageError("bound: --q must lie in (0, 1]");
  const abp::Network net = abp::load_weights(a.weights);
  const abp::Dataset data = load_inputs(a.data, a.target, a.scaler);
  if (data.cols() != net.input_width()) throw abp::DimensionError("bound: data width does not match the network");

  std::optional<abp::Network> pruned;
  if (a.scope == "surviving") {
    if (a.pruned.empty()) throw UsageError("bound: --scope surviving needs --pruned");
    pruned = abp::load_weights(a.pruned);
  }
  const abp::LayerStats stats =
      abp::layer_stats(net, data.features, a.q,
                       pruned ? abp::TNormScope::surviving_neurons : abp::TNormScope::all_neurons,
                       pruned ? &*pruned : nullptr);
  const Eigen::Index depth = stats.depth();

  abp::BoundInput in;
  in.stats = stats;
  in.steps = a.steps.value_or(depth);
  in.rho = a.rho;
  in.C = a.C;
  in.base_error = a.base_error;
  if (a.m.empty()) {
    if (a.q.size() == 1 && a.q.front() == 1.0) throw UsageError("bound: --m is required when q = 1");
    in.m = abp::magnitude_keep_counts(net, a.q, a.eta);
  } else if (a.m.size() == 1) {
    // A single m is broadcast, capped at each layer's width.
    for (Eigen::Index k = 0; k < depth; ++k) in.m.push_back(std::min(a.m.front(), stats.n[static_cast<std::size_t>(k)]));
  } else {
    in.m = a.m;
  }

  json j;
  if (a.variant == "theorem1") {
    j = abp::to_json(abp::theorem1_breakdown(in));
  } else if (a.variant == "magnitude") {
    j = abp::to_json(abp::magnitude_breakdown(in));
  } else if (a.variant == "classification") {
    j = abp::to_json(abp::classification_breakdown(in, a.base_error));
  } else {
    if (a.q.size() != 1) throw UsageError("bound: corollary takes a single --q");
    const Eigen::Index m = a.m.size() == 1 ? a.m.front() : *std::min_element(in.m.begin(), in.m.end());
    j["variant"] = "corollary";
    j["total"] = abp::corollary_bound(stats.t, m, a.q.front(), in.steps, a.C, a.base_error);
    j["C"] = a.C;
    j["S"] = in.steps;
    j["m"] = m;
  }
  j["m_k"] = in.m;
  j["t_k"] = stats.t;
  j["max_f_norm_k"] = stats.max_f_norm;
  j["note"] = "C is an unspecified universal constant; base error |f - f_T| is not estimable and defaults to 0";

  if (!a.out.empty()) write_json(a.out, j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_experiment(const ConfigOverrides& o, std::optional<int> replications, std::optional<int> threads,
                   std::optional<Eigen::Index> rows, bool quiet) {
  abp::ExperimentConfig cfg = o.resolve();
  if (replications) cfg.replications = *replications;
  if (threads) cfg.threads = *threads;
  if (rows) cfg.prune_rows = *rows;
  cfg.validate();
  if (!cfg.synthetic && !fs::exists(cfg.data_path))
    throw UsageError("experiment: data file '" + cfg.data_path + "' not found");

  const abp::Dataset data = abp::load_experiment_data(cfg);
  const abp::ExperimentResult result = abp::run_experiment(cfg, data, [&](const abp::ReplicationOutcome& r) {
    if (quiet) return;
    if (r.error.empty())
      std::fprintf(stderr, "replication %d done (train mse %.4g)\n", r.replication, r.train_mse);
    else
      std::fprintf(stderr, "replication %d failed: %s\n", r.replication, r.error.c_str());
  });
  abp::write_experiment_outputs(cfg, result);
  std::cout << abp::format_table(result.cells);
  std::printf("wrote %s\n", (cfg.output_dir / "results.csv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive backward pruning of fully connected networks"};
  app.require_subcommand(1);

  ConfigOverrides train_o;
  bool save_splits = false;
  auto* train_cmd = app.add_subcommand("train", "train a network and write weights, scaler and log");
  train_o.attach(train_cmd);
  train_cmd->add_flag("--save-splits", save_splits, "also write the raw train/val/test splits as CSV");

  PruneArgs pa;
  auto* prune_cmd = app.add_subcommand("prune", "prune a trained network");
  prune_cmd->add_option("--weights", pa.weights, "weights JSON")->required()->check(CLI::ExistingFile);
  prune_cmd->add_option("--data", pa.data, "CSV with the pruning inputs")->required()->check(CLI::ExistingFile);
  prune_cmd->add_option("--target", pa.target, "target column");
  prune_cmd->add_option("--scaler", pa.scaler, "scaler JSON written by train")->check(CLI::ExistingFile);
  prune_cmd->add_flag("--abp-m", pa.abp_m, "magnitude-based sparse approximation");
  prune_cmd->add_flag("--abp-l", pa.abp_l, "LASSO-based sparse approximation");
  prune_cmd->add_flag("--baseline", pa.baseline, "fixed-proportion magnitude pruning");
  prune_cmd->add_option("--q", pa.q);
  prune_cmd->add_option("--eta", pa.eta);
  prune_cmd->add_option("--lambda", pa.lambda);
  prune_cmd->add_option("--p", pa.p);
  prune_cmd->add_option("--rows", pa.rows, "subsample this many rows for the fits");
  prune_cmd->add_option("--seed", pa.seed, "row subsampling seed");
  prune_cmd->add_option("--out", pa.out, "output directory");

  BoundArgs ba;
  auto* bound_cmd = app.add_subcommand("bound", "evaluate the pruning error bounds");
  bound_cmd->add_option("--weights", ba.weights, "weights JSON")->required()->check(CLI::ExistingFile);
  bound_cmd->add_option("--data", ba.data, "CSV used for the neuron norms")->required()->check(CLI::ExistingFile);
  bound_cmd->add_option("--target", ba.target, "target column");
  bound_cmd->add_option("--scaler", ba.scaler)->check(CLI::ExistingFile);
  bound_cmd->add_option("--variant", ba.variant)
      ->check(CLI::IsMember({"theorem1", "corollary", "magnitude", "classification"}));
  bound_cmd->add_option("--S", ba.steps, "number of pruned layers counted from the output");
  bound_cmd->add_option("--q", ba.q, "one q, or one per layer")->delimiter(',');
  bound_cmd->add_option("--m", ba.m, "kept inputs per neuron: one value or one per layer")->delimiter(',');
  bound_cmd->add_option("--C", ba.C);
  bound_cmd->add_option("--rho", ba.rho, "Lipschitz constant of the activation");
  bound_cmd->add_option("--eta", ba.eta, "tolerance used to derive m when --m is absent");
  bound_cmd->add_option("--base-error", ba.base_error);
  bound_cmd->add_option("--scope", ba.scope, "t_k over all or surviving neurons")
      ->check(CLI::IsMember({"all", "surviving"}));
  bound_cmd->add_option("--pruned", ba.pruned, "pruned weights (for --scope surviving)")->check(CLI::ExistingFile);
  bound_cmd->add_option("--out", ba.out, "also write the report to this file");

  ConfigOverrides exp_o;
  std::optional<int> reps, threads;
  std::optional<Eigen::Index> rows;
  bool quiet = false;
  auto* exp_cmd = app.add_subcommand("experiment", "replicated train/prune/evaluate grid");
  exp_o.attach(exp_cmd);
  exp_cmd->get_option("--config")->required();
  exp_cmd->add_option("--replications", reps);
  exp_cmd->add_option("--threads", threads);
  exp_cmd->add_option("--rows", rows, "subsample rows for pruning fits");
  exp_cmd->add_flag("--quiet", quiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(train_o, save_splits);
    if (*prune_cmd) return cmd_prune(pa);
    if (*bound_cmd) return cmd_bound(ba);
    if (*exp_cmd) return cmd_experiment(exp_o, reps, threads, rows, quiet);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const abp::ConfigError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
