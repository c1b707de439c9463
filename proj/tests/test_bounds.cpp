#include "support.hpp"

#include <gtest/gtest.h>

using namespace abp;
using namespace abp::testing;

namespace {

BoundInput fixture(Index depth, double t, double q, Index m, Index n = 10) {
  BoundInput in;
  for (Index k = 0; k < depth; ++k) {
    in.stats.t.push_back(t);
    in.stats.q.push_back(q);
    in.stats.n.push_back(n);
    in.stats.max_f_norm.push_back(1.0);
  }
  in.m.assign(static_cast<std::size_t>(depth), m);
  return in;
}

BoundInput random_input(std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> depth_d(1, 5), n_d(2, 64);
  std::uniform_real_distribution<double> q_d(0.05, 1.0), t_d(0.0, 5.0), f_d(1.0, 4.0), rho_d(0.1, 3.0), c_d(0.0, 3.0);
  BoundInput in;
  const Index depth = depth_d(rng);
  for (Index k = 0; k < depth; ++k) {
    const Index n = n_d(rng);
    in.stats.t.push_back(t_d(rng));
    in.stats.q.push_back(q_d(rng));
    in.stats.n.push_back(n);
    in.stats.max_f_norm.push_back(f_d(rng));
    in.m.push_back(std::uniform_int_distribution<Index>(1, n)(rng));
  }
  in.steps = std::uniform_int_distribution<Index>(1, depth)(rng);
  in.rho = rho_d(rng);
  in.C = c_d(rng);
  return in;
}

}  // namespace

TEST(Theorem1, SingleStepFixture) {
  const BoundInput in = fixture(1, 1.0, 0.5, 4);
  EXPECT_DOUBLE_EQ(theorem1_bound(in), 0.125);
  EXPECT_DOUBLE_EQ(magnitude_bound(in), 0.25);
  BoundInput doubled = in;
  doubled.m = {8};
  EXPECT_NEAR(theorem1_bound(doubled) / theorem1_bound(in), std::pow(2.0, -1.5), 1e-15);
}

TEST(Theorem1, TermsUseTheDeepestLayersAndRho) {
  BoundInput in = fixture(3, 1.0, 0.5, 1);
  in.stats.t = {5.0, 3.0, 2.0};
  in.stats.max_f_norm = {1.0, 1.0, 1.5};
  in.steps = 2;
  in.rho = 0.5;
  in.C = 2.0;
  in.base_error = 0.1;
  const BoundBreakdown b = theorem1_breakdown(in);
  ASSERT_EQ(b.per_step_terms.size(), 2u);
  EXPECT_DOUBLE_EQ(b.per_step_terms[0], 2.0 * 2.0 * 1.5);
  EXPECT_DOUBLE_EQ(b.per_step_terms[1], 0.5 * 2.0 * 6.0 * 1.0);
  EXPECT_DOUBLE_EQ(b.total, 0.1 + 6.0 + 6.0);
}

TEST(Corollary, HandValues) {
  EXPECT_DOUBLE_EQ(corollary_bound({1.0, 1.0, 1.0}, 1, 0.5, 3, 1.0), 3.0);
  EXPECT_DOUBLE_EQ(corollary_bound({0.0, 0.0, 0.0}, 4, 0.5, 3, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(corollary_bound({0.0, 0.0}, 4, 0.5, 2, 1.0, 0.7), 0.7);
  EXPECT_DOUBLE_EQ(corollary_bound({1.0}, 4, 0.5, 1, 1.0), 0.125);
  EXPECT_THROW(corollary_bound({1.0}, 0, 0.5, 1, 1.0), ConfigError);
  EXPECT_THROW(corollary_bound({1.0}, 1, 0.5, 2, 1.0), ConfigError);
}

TEST(Corollary, AgreesWithGeneralBoundUnderHomogeneity) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> t_d(0.1, 3.0), q_d(0.1, 0.95);
  for (int i = 0; i < 200; ++i) {
    const double q = q_d(rng);
    BoundInput in = fixture(4, 1.0, q, 3);
    for (auto& t : in.stats.t) t = t_d(rng);
    in.steps = 3;
    in.C = 1.7;
    EXPECT_NEAR(corollary_bound(in.stats.t, 3, q, 3, 1.7), theorem1_bound(in), 1e-12 * theorem1_bound(in));
  }
}

TEST(Classification, HandValues) {
  const BoundInput in = fixture(1, 1.0, 0.5, 4);
  EXPECT_DOUBLE_EQ(classification_bound(in, 0.1), 0.325);
  const BoundInput zero_t = fixture(2, 0.0, 0.5, 4);
  EXPECT_DOUBLE_EQ(classification_bound(zero_t, 0.3), 0.6);
  EXPECT_THROW(classification_bound(in, -1.0), ConfigError);
}

TEST(Bounds, Validation) {
  BoundInput in = fixture(2, 1.0, 0.5, 4);
  in.m = {4};
  EXPECT_THROW(theorem1_bound(in), DimensionError);
  in = fixture(2, 1.0, 0.5, 11);
  EXPECT_THROW(theorem1_bound(in), ConfigError);
  in = fixture(2, 1.0, 0.5, 4);
  in.steps = 3;
  EXPECT_THROW(theorem1_bound(in), ConfigError);
  in.steps = 1;
  in.rho = 0.0;
  EXPECT_THROW(theorem1_bound(in), ConfigError);
}

TEST(Bounds, NonIncreasingInKeepCount) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    BoundInput in = random_input(rng);
    const auto k = static_cast<std::size_t>(rng() % in.m.size());
    in.m[k] = 1;
    double prev = theorem1_bound(in);
    for (Index m = 2; m <= in.stats.n[k]; ++m) {
      in.m[k] = m;
      const double b = theorem1_bound(in);
      EXPECT_LE(b, prev * (1.0 + 1e-12) + 1e-300);
      prev = b;
    }
  }
}

TEST(Bounds, MagnitudeDominatesTheorem1) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    BoundInput in = random_input(rng);
    in.C = 1.0;
    EXPECT_GE(magnitude_bound(in), theorem1_bound(in) * (1.0 - 1e-12));
  }
}

TEST(Bounds, AddingAStepNeverDecreases) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 500; ++i) {
    BoundInput in = random_input(rng);
    if (in.steps == in.stats.depth()) continue;
    const double b = theorem1_bound(in);
    ++in.steps;
    EXPECT_GE(theorem1_bound(in), b);
  }
}

TEST(Bounds, StepTermsScaleWithConstant) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    BoundInput in = random_input(rng);
    in.C = 1.0;
    const double b1 = theorem1_bound(in);
    in.C = 2.5;
    EXPECT_NEAR(theorem1_bound(in), 2.5 * b1, 1e-12 * b1 + 1e-300);
  }
}

TEST(LayerStats, OneHotNetworkHasUnitTAtUnitWeights) {
  MatrixXd w1 = MatrixXd::Zero(3, 3), w2 = MatrixXd::Zero(1, 4);
  w1(0, 0) = 1.0;
  w1(1, 1) = -1.0;
  w1(2, 0) = 1.0;
  w2(0, 2) = 1.0;
  const Network net = make_network({w1, w2}, Activation::relu);
  std::mt19937_64 rng(6);
  const LayerStats s = layer_stats(net, gaussian_matrix(rng, 50, 2), {0.5});
  EXPECT_EQ(s.t, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(s.n, (std::vector<Index>{3, 4}));
}

TEST(LayerStats, QOneGivesL1AndSigmoidNormsAreBounded) {
  std::mt19937_64 rng(7);
  const Network net = random_network(rng, {3, 6, 4, 1}, Activation::sigmoid);
  const MatrixXd x = gaussian_matrix(rng, 80, 3);
  const LayerStats s = layer_stats(net, x, {1.0});
  for (Index k = 0; k < 3; ++k) {
    double l1 = 0.0;
    const MatrixXd& w = net.layers[static_cast<std::size_t>(k)].weights;
    for (Index i = 0; i < w.rows(); ++i) l1 = std::max(l1, w.row(i).lpNorm<1>());
    EXPECT_NEAR(s.t[static_cast<std::size_t>(k)], l1, 1e-12 * l1);
  }
  // Sigmoid outputs lie in (0, 1), so hidden norms never exceed the constant neuron's.
  EXPECT_EQ(s.max_f_norm[1], 1.0);
  EXPECT_EQ(s.max_f_norm[2], 1.0);
  const double input_norm = (x.colwise().squaredNorm() / 80.0).cwiseSqrt().maxCoeff();
  EXPECT_DOUBLE_EQ(s.max_f_norm[0], std::max(1.0, input_norm));
  EXPECT_THROW(layer_stats(net, x, {0.5, 0.5}), ConfigError);
}

TEST(LayerStats, TIsHomogeneousInWeights) {
  std::mt19937_64 rng(8);
  Network net = random_network(rng, {3, 5, 1}, Activation::identity);
  const MatrixXd x = gaussian_matrix(rng, 20, 3);
  const LayerStats a = layer_stats(net, x, {0.4});
  net.layers[1].weights *= 3.0;
  const LayerStats b = layer_stats(net, x, {0.4});
  EXPECT_NEAR(b.t[1], 3.0 * a.t[1], 1e-12 * a.t[1]);
  EXPECT_DOUBLE_EQ(b.t[0], a.t[0]);
}

TEST(LayerStats, SurvivingScopeSkipsDisconnectedNeurons) {
  MatrixXd w1(2, 2), w2(1, 3);
  w1 << 1, 0, 10, 0;
  w2 << 1, 1, 0;
  const Network net = make_network({w1, w2}, Activation::relu);
  Network pruned = net;
  pruned.layers[1].prune(0, 1);
  const MatrixXd x = MatrixXd::Ones(4, 1);
  EXPECT_DOUBLE_EQ(layer_stats(net, x, {0.5}).t[0], 10.0);
  EXPECT_DOUBLE_EQ(layer_stats(net, x, {0.5}, TNormScope::surviving_neurons, &pruned).t[0], 1.0);
  EXPECT_THROW(layer_stats(net, x, {0.5}, TNormScope::surviving_neurons), ConfigError);
}

TEST(MagnitudeKeepCounts, PerLayerMinimum) {
  MatrixXd w1(2, 4), w2(1, 3);
  w1 << 4, 1, 1, 1, 1, 1, 1, 1;
  w2 << 0, 0, 5;
  const Network net = make_network({w1, w2}, Activation::relu);
  EXPECT_EQ(magnitude_keep_counts(net, {0.5}, 0.0), (std::vector<Index>{4, 1}));
  EXPECT_EQ(magnitude_keep_counts(net, {0.5}, 0.3), (std::vector<Index>{3, 1}));
}
