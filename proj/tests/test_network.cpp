#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace abp;
using namespace abp::testing;

TEST(Activation, LipschitzConstants) {
  EXPECT_EQ(ActivationKind{Activation::relu}.lipschitz(), 1.0);
  EXPECT_EQ(ActivationKind{Activation::tanh}.lipschitz(), 1.0);
  EXPECT_EQ(ActivationKind{Activation::sigmoid}.lipschitz(), 0.25);
  EXPECT_EQ(ActivationKind{Activation::identity}.lipschitz(), 1.0);
  EXPECT_EQ(ActivationKind::parse("tanh").kind, Activation::tanh);
  EXPECT_THROW(ActivationKind::parse("swish"), ConfigError);
}

TEST(Activation, ReluSubgradientAtZeroIsZero) {
  EXPECT_EQ(ActivationKind{Activation::relu}.derivative(0.0), 0.0);
  EXPECT_EQ(ActivationKind{Activation::relu}.derivative(1e-300), 1.0);
}

TEST(Forward, IdentityCompositionReturnsInput) {
  MatrixXd w1(1, 2), w2(1, 2);
  w1 << 1, 0;
  w2 << 1, 0;
  const Network net = make_network({w1, w2}, Activation::identity);
  EXPECT_DOUBLE_EQ(forward(net, VectorXd::Constant(1, 2.0)), 2.0);
}

TEST(Forward, ReluClampsNegativePreActivation) {
  MatrixXd w1(1, 2), w2(1, 2);
  w1 << 1, -3;
  w2 << 1, 0;
  const Network net = make_network({w1, w2}, Activation::relu);
  EXPECT_DOUBLE_EQ(forward(net, VectorXd::Constant(1, 2.0)), 0.0);
}

TEST(Forward, HandEvaluatedTwoTwoOneRelu) {
  // Hidden: h1 = relu(1*x1 - 2*x2 + 0.5), h2 = relu(-1*x1 + 3*x2 - 1)
  // Output: 2*h1 - 1*h2 + 0.25
  MatrixXd w1(2, 3), w2(1, 3);
  w1 << 1, -2, 0.5, -1, 3, -1;
  w2 << 2, -1, 0.25;
  const Network net = make_network({w1, w2}, Activation::relu);
  VectorXd x(2);
  x << 1.5, 0.5;
  // h1 = relu(1.5 - 1 + 0.5) = 1, h2 = relu(-1.5 + 1.5 - 1) = 0 -> 2.25
  EXPECT_DOUBLE_EQ(forward(net, x), 2.25);
  x << 0.0, 1.0;
  // h1 = relu(-1.5) = 0, h2 = relu(3 - 1) = 2 -> -1.75
  EXPECT_DOUBLE_EQ(forward(net, x), -1.75);
}

TEST(Forward, DimensionMismatchRejected) {
  std::mt19937_64 rng(1);
  const Network net = random_network(rng, {3, 4, 1}, Activation::tanh);
  EXPECT_THROW(forward(net, VectorXd::Zero(2)), DimensionError);
  EXPECT_THROW(forward_trace(net, MatrixXd::Zero(5, 4)), DimensionError);
}

TEST(Forward, MatchesScalarOracleAndIsFinite) {
  std::mt19937_64 rng(2);
  for (Activation act : {Activation::relu, Activation::tanh, Activation::sigmoid, Activation::identity}) {
    const Network net = random_network(rng, {4, 6, 5, 1}, act);
    const MatrixXd x = gaussian_matrix(rng, 20, 4);
    const VectorXd batch = predict(net, x);
    for (Index i = 0; i < x.rows(); ++i) {
      const double single = forward(net, x.row(i).transpose());
      EXPECT_TRUE(std::isfinite(single));
      EXPECT_NEAR(single, naive_forward(net, x.row(i).transpose()), 1e-12);
      EXPECT_NEAR(batch(i), single, 1e-12);
    }
  }
}

TEST(Trace, FinalLayerEqualsForwardAndHiddenIsActivated) {
  std::mt19937_64 rng(3);
  const Network net = random_network(rng, {3, 5, 4, 1}, Activation::tanh);
  const MatrixXd x = gaussian_matrix(rng, 15, 3);
  const ActivationTrace t = forward_trace(net, x);
  ASSERT_EQ(t.depth(), 3);
  EXPECT_EQ(t.outputs[0], x);
  for (Index i = 0; i < x.rows(); ++i) EXPECT_NEAR(t.predictions()(i), forward(net, x.row(i).transpose()), 1e-12);
  for (std::size_t k = 1; k < 3; ++k)
    EXPECT_EQ(t.outputs[k], net.activation.apply(t.pre_activations[k]));
  EXPECT_EQ(t.outputs[3], t.pre_activations[3]);
  const MatrixXd f = t.features_for(2);
  EXPECT_EQ(f.cols(), 6);
  EXPECT_TRUE(f.col(5).isOnes(0.0));
}

TEST(Trace, IdentityNetPreActivationsEqualOutputs) {
  std::mt19937_64 rng(4);
  const Network net = random_network(rng, {2, 3, 3, 1}, Activation::identity);
  const ActivationTrace t = forward_trace(net, gaussian_matrix(rng, 10, 2));
  for (std::size_t k = 1; k < t.outputs.size(); ++k) EXPECT_EQ(t.outputs[k], t.pre_activations[k]);
}

TEST(Network, LipschitzPerturbationBound) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (Activation act : {Activation::tanh, Activation::sigmoid}) {
    const ActivationKind a{act};
    for (int i = 0; i < 1000; ++i) {
      const double x = 3.0 * n(rng), dx = n(rng);
      EXPECT_LE(std::abs(a.apply(x + dx) - a.apply(x)), a.lipschitz() * std::abs(dx) + 1e-15);
    }
  }
}

TEST(CountParams, DenseTwoTwoOne) {
  MatrixXd w1(2, 3), w2(1, 3);
  w1 << 1, 2, 3, 4, 5, 6;
  w2 << 7, 8, 9;
  Network net = make_network({w1, w2}, Activation::relu);
  ParamCount c = count_params(net);
  EXPECT_EQ(c.total, 9);
  EXPECT_EQ(c.nonzero, 9);
}

TEST(CountParams, MaskingHalfAndAllZero) {
  Network net = make_network({MatrixXd::Ones(1, 4), MatrixXd::Ones(1, 2)}, Activation::relu);
  ASSERT_EQ(count_params(net).total, 6);
  net.layers[0].prune(0, 1);
  net.layers[0].prune(0, 3);
  net.layers[1].prune(0, 1);
  EXPECT_EQ(count_params(net).nonzero, 3);
  EXPECT_EQ(count_params(net).total, 6);
  const Network zero = make_network({MatrixXd::Zero(3, 3), MatrixXd::Zero(1, 4)}, Activation::relu);
  EXPECT_EQ(count_params(zero).nonzero, 0);
  EXPECT_EQ(count_params(zero).total, 13);
}

TEST(Weights, SaveLoadRoundTripIsBitExact) {
  std::mt19937_64 rng(6);
  Network net = random_network(rng, {4, 7, 3, 1}, Activation::sigmoid);
  net.layers[0].weights(2, 3) = 1.0 / 3.0;
  net.layers[1].weights(0, 0) = 5e-324;
  net.layers[0].prune(1, 1);
  net.layers[2].prune(0, 2);
  const auto dir = temp_dir("weights_roundtrip");
  save_weights(net, dir / "w.json");
  const Network back = load_weights(dir / "w.json");
  EXPECT_TRUE(back == net);
  EXPECT_TRUE(back.layers[0].mask(1, 1));
  EXPECT_TRUE(back.layers[2].mask(0, 2));
  EXPECT_EQ(back.activation.kind, Activation::sigmoid);
}

TEST(Weights, WrongLayerCountRejected) {
  std::mt19937_64 rng(7);
  const Network net = random_network(rng, {2, 3, 1}, Activation::relu);
  nlohmann::json j = to_json(net);
  j["layer_dims"] = std::vector<Index>{2, 3, 3, 1};
  EXPECT_THROW(network_from_json(j), DataError);
}

TEST(Weights, CorruptFilesRejected) {
  const auto dir = temp_dir("weights_corrupt");
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_weights(dir / "bad.json"), DataError);
  EXPECT_THROW(load_weights(dir / "missing.json"), DataError);
  std::mt19937_64 rng(8);
  nlohmann::json j = to_json(random_network(rng, {2, 2, 1}, Activation::relu));
  j["layers"][0]["values"].erase(0);
  EXPECT_THROW(network_from_json(j), DataError);
  nlohmann::json k = to_json(random_network(rng, {2, 2, 1}, Activation::relu));
  k["layers"][1]["mask"][0] = 1;  // masked but nonzero
  EXPECT_THROW(network_from_json(k), DataError);
}

TEST(Network, ValidateCatchesShapeErrors) {
  Network bad = make_network({MatrixXd::Ones(3, 3), MatrixXd::Ones(1, 3)}, Activation::relu);
  EXPECT_THROW(bad.validate(), DimensionError);
  Network wide = make_network({MatrixXd::Ones(2, 3), MatrixXd::Ones(2, 3)}, Activation::relu);
  EXPECT_THROW(wide.validate(), DimensionError);
}
