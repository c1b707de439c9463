#pragma once

// Tabular regression data: CSV ingestion, standardization, seeded splits and
// a synthetic sparse-linear generator used as a test fixture.

#include <abp/error.hpp>

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace abp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Dataset {
  MatrixXd features;  // N x p
  VectorXd targets;   // N
  std::vector<std::string> feature_names;
  std::string target_name = "y";

  Index rows() const { return features.rows(); }
  Index cols() const { return features.cols(); }

  Dataset subset(std::span<const Index> row_ids) const {
    Dataset out;
    out.features.resize(static_cast<Index>(row_ids.size()), cols());
    out.targets.resize(static_cast<Index>(row_ids.size()));
    for (Index i = 0; i < static_cast<Index>(row_ids.size()); ++i) {
      out.features.row(i) = features.row(row_ids[i]);
      out.targets(i) = targets(row_ids[i]);
    }
    out.feature_names = feature_names;
    out.target_name = target_name;
    return out;
  }
};

inline void validate(const Dataset& d) {
  if (d.rows() < 1 || d.cols() < 1)
    throw DataError("dataset must have at least one row and one feature column");
  if (d.targets.size() != d.rows())
    throw DimensionError("target length " + std::to_string(d.targets.size()) +
                         " does not match row count " + std::to_string(d.rows()));
  if (!d.features.allFinite() || !d.targets.allFinite())
    throw DataError("dataset contains NaN or Inf entries");
  if (!d.feature_names.empty() && static_cast<Index>(d.feature_names.size()) != d.cols())
    throw DimensionError("feature_names length does not match column count");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '"' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace detail

/// Reads a header-first CSV. The target column is removed from the features.
/// Rows are numbered from 1 (the header) in error messages.
inline Dataset load_csv(const std::filesystem::path& path, const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty())
    throw DataError("CSV file '" + path.string() + "' is empty");

  std::vector<std::string> header;
  for (const auto f : detail::split_fields(line)) header.emplace_back(f);
  Index target_idx = -1;
  Dataset d;
  d.target_name = target_column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == target_column)
      target_idx = static_cast<Index>(c);
    else
      d.feature_names.emplace_back(header[c]);
  }
  if (target_idx < 0)
    throw DataError("target column '" + target_column + "' not found in '" + path.string() + "'");
  if (d.feature_names.empty()) throw DataError("CSV has no feature columns besides the target");

  const auto ncols = static_cast<Index>(header.size());
  std::vector<double> values;
  Index nrows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (static_cast<Index>(fields.size()) != ncols)
      throw DataError("row " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(ncols));
    for (Index c = 0; c < ncols; ++c) {
      double v = 0.0;
      if (!detail::parse_double(fields[c], v) || !std::isfinite(v))
        throw DataError("row " + std::to_string(line_no) + ", column '" + header[c] +
                        "': cannot parse '" + std::string(fields[c]) + "' as a finite real");
      values.push_back(v);
    }
    ++nrows;
  }
  if (nrows == 0) throw DataError("CSV file '" + path.string() + "' has no data rows");

  d.features.resize(nrows, ncols - 1);
  d.targets.resize(nrows);
  for (Index r = 0; r < nrows; ++r) {
    Index fc = 0;
    for (Index c = 0; c < ncols; ++c) {
      const double v = values[static_cast<std::size_t>(r * ncols + c)];
      if (c == target_idx)
        d.targets(r) = v;
      else
        d.features(r, fc++) = v;
    }
  }
  return d;
}

/// Writes features followed by the target column, 17 significant digits.
inline void save_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write CSV file '" + path.string() + "'");
  for (Index c = 0; c < d.cols(); ++c) {
    out << (d.feature_names.empty() ? "x" + std::to_string(c) : d.feature_names[c]) << ',';
  }
  out << d.target_name << '\n';
  out << std::setprecision(17);
  for (Index r = 0; r < d.rows(); ++r) {
    for (Index c = 0; c < d.cols(); ++c) out << d.features(r, c) << ',';
    out << d.targets(r) << '\n';
  }
}

/// Per-column affine map fitted by `standardize`. Population (divide-by-N)
/// standard deviations; constant columns are flagged and map to zero.
struct ScalerParams {
  VectorXd means;
  VectorXd stddevs;
  std::vector<bool> constant;
  bool scale_targets = false;
  double target_mean = 0.0;
  double target_stddev = 1.0;

  Dataset apply(const Dataset& d) const {
    if (d.cols() != means.size()) throw DimensionError("scaler width does not match dataset");
    Dataset out = d;
    for (Index c = 0; c < d.cols(); ++c) {
      if (constant[c])
        out.features.col(c).setZero();
      else
        out.features.col(c) = (d.features.col(c).array() - means(c)) / stddevs(c);
    }
    if (scale_targets) out.targets = (d.targets.array() - target_mean) / target_stddev;
    return out;
  }

  /// Constant columns are restored to their recorded mean.
  Dataset invert(const Dataset& d) const {
    if (d.cols() != means.size()) throw DimensionError("scaler width does not match dataset");
    Dataset out = d;
    for (Index c = 0; c < d.cols(); ++c) {
      if (constant[c])
        out.features.col(c).setConstant(means(c));
      else
        out.features.col(c) = d.features.col(c).array() * stddevs(c) + means(c);
    }
    if (scale_targets) out.targets = d.targets.array() * target_stddev + target_mean;
    return out;
  }
};

inline ScalerParams fit_scaler(const Dataset& d, bool scale_targets = false) {
  if (d.rows() < 2) throw DataError("standardization needs at least two rows");
  ScalerParams s;
  const auto n = static_cast<double>(d.rows());
  s.means = d.features.colwise().mean().transpose();
  s.stddevs.resize(d.cols());
  s.constant.assign(static_cast<std::size_t>(d.cols()), false);
  for (Index c = 0; c < d.cols(); ++c) {
    const double var = (d.features.col(c).array() - s.means(c)).square().sum() / n;
    s.stddevs(c) = std::sqrt(var);
    const double scale = d.features.col(c).cwiseAbs().maxCoeff();
    if (s.stddevs(c) <= 1e-12 * std::max(scale, 1e-300)) {
      s.constant[c] = true;
      s.stddevs(c) = 1.0;
    }
  }
  s.scale_targets = scale_targets;
  if (scale_targets) {
    s.target_mean = d.targets.mean();
    s.target_stddev = std::sqrt((d.targets.array() - s.target_mean).square().sum() / n);
    if (!(s.target_stddev > 0.0)) s.target_stddev = 1.0;
  }
  return s;
}

inline std::pair<Dataset, ScalerParams> standardize(const Dataset& d, bool scale_targets = false) {
  ScalerParams s = fit_scaler(d, scale_targets);
  Dataset out = s.apply(d);
  return {std::move(out), std::move(s)};
}

inline nlohmann::json to_json(const ScalerParams& s) {
  nlohmann::json j;
  j["means"] = std::vector<double>(s.means.data(), s.means.data() + s.means.size());
  j["stddevs"] = std::vector<double>(s.stddevs.data(), s.stddevs.data() + s.stddevs.size());
  j["constant"] = s.constant;
  j["scale_targets"] = s.scale_targets;
  j["target_mean"] = s.target_mean;
  j["target_stddev"] = s.target_stddev;
  return j;
}

inline ScalerParams scaler_from_json(const nlohmann::json& j) {
  try {
    ScalerParams s;
    const auto means = j.at("means").get<std::vector<double>>();
    const auto sds = j.at("stddevs").get<std::vector<double>>();
    s.constant = j.at("constant").get<std::vector<bool>>();
    if (means.size() != sds.size() || means.size() != s.constant.size())
      throw DataError("scaler arrays have inconsistent lengths");
    s.means = Eigen::Map<const VectorXd>(means.data(), static_cast<Index>(means.size()));
    s.stddevs = Eigen::Map<const VectorXd>(sds.data(), static_cast<Index>(sds.size()));
    s.scale_targets = j.value("scale_targets", false);
    s.target_mean = j.value("target_mean", 0.0);
    s.target_stddev = j.value("target_stddev", 1.0);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid scaler JSON: ") + e.what());
  }
}

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DataSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Sizes: train = round(N*train), val = round(N*val), test = remainder.
inline std::array<Index, 3> split_sizes(Index n, SplitFractions f) {
  if (!(f.train > 0.0 && f.val > 0.0 && f.test > 0.0))
    throw ConfigError("split fractions must be positive");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");
  auto n_train = static_cast<Index>(std::llround(static_cast<double>(n) * f.train));
  auto n_val = static_cast<Index>(std::llround(static_cast<double>(n) * f.val));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  return {n_train, n_val, n - n_train - n_val};
}

inline DataSplit split(const Dataset& d, SplitFractions f, std::uint64_t seed) {
  const auto sizes = split_sizes(d.rows(), f);
  std::vector<Index> perm(static_cast<std::size_t>(d.rows()));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::span<const Index> all(perm);
  DataSplit out;
  out.train = d.subset(all.subspan(0, static_cast<std::size_t>(sizes[0])));
  out.val = d.subset(all.subspan(static_cast<std::size_t>(sizes[0]), static_cast<std::size_t>(sizes[1])));
  out.test = d.subset(all.subspan(static_cast<std::size_t>(sizes[0] + sizes[1])));
  return out;
}

struct SyntheticRegression {
  Dataset data;
  VectorXd coefficients;  // length p, exactly `support.size()` nonzeros
  std::vector<Index> support;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
};

/// Gaussian design, sparse linear response. Nonzero coefficients have
/// magnitude in [0.5, 2] with random sign.
inline SyntheticRegression synth_regression(Index n, Index p, Index sparsity, double noise_sd,
                                            std::uint64_t seed) {
  if (n < 1 || p < 1) throw ConfigError("synth_regression needs n >= 1 and p >= 1");
  if (sparsity < 0 || sparsity > p) throw ConfigError("sparsity must lie in [0, p]");
  if (!(noise_sd >= 0.0)) throw ConfigError("noise_sd must be non-negative");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> magnitude(0.5, 2.0);
  std::bernoulli_distribution coin(0.5);

  SyntheticRegression s;
  s.noise_sd = noise_sd;
  s.seed = seed;
  std::vector<Index> cols(static_cast<std::size_t>(p));
  std::iota(cols.begin(), cols.end(), Index{0});
  std::shuffle(cols.begin(), cols.end(), rng);
  s.support.assign(cols.begin(), cols.begin() + sparsity);
  std::sort(s.support.begin(), s.support.end());
  s.coefficients = VectorXd::Zero(p);
  for (Index j : s.support) s.coefficients(j) = (coin(rng) ? 1.0 : -1.0) * magnitude(rng);

  s.data.features.resize(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) s.data.features(i, j) = normal(rng);
  s.data.targets = s.data.features * s.coefficients;
  if (noise_sd > 0.0)
    for (Index i = 0; i < n; ++i) s.data.targets(i) += noise_sd * normal(rng);
  for (Index j = 0; j < p; ++j) s.data.feature_names.push_back("x" + std::to_string(j));
  return s;
}

/// Metadata sidecar for a synthetic dataset.
inline nlohmann::json to_json(const SyntheticRegression& s) {
  nlohmann::json j;
  j["n"] = s.data.rows();
  j["p"] = s.data.cols();
  j["sparsity"] = s.support.size();
  j["noise_sd"] = s.noise_sd;
  j["seed"] = s.seed;
  j["support"] = s.support;
  j["coefficients"] =
      std::vector<double>(s.coefficients.data(), s.coefficients.data() + s.coefficients.size());
  return j;
}

}  // namespace abp
