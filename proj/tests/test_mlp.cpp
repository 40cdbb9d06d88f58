#include "nebp/mlp.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

namespace nebp {
namespace {

Mlp<double> identity_net(Index n) {
  Mlp<double> net;
  net.layers.push_back({MatrixXd::Identity(n, n), VectorXd::Zero(n), Activation::Identity});
  return net;
}

std::vector<double*> mlp_parameters(Mlp<double>& net) {
  std::vector<double*> out;
  for (auto& l : net.layers) {
    for (Index k = 0; k < l.weight.size(); ++k) out.push_back(l.weight.data() + k);
    for (Index k = 0; k < l.bias.size(); ++k) out.push_back(l.bias.data() + k);
  }
  return out;
}

std::vector<double> mlp_flatten(const MlpGradient<double>& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.weight.size(); ++l) {
    out.insert(out.end(), g.weight[l].data(), g.weight[l].data() + g.weight[l].size());
    out.insert(out.end(), g.bias[l].data(), g.bias[l].data() + g.bias[l].size());
  }
  return out;
}

// Weighted sum of outputs, so every output receives a distinct gradient.
double probe_loss(const Mlp<double>& net, const MatrixXd& x, const MatrixXd& w) {
  return mlp_forward(net, x).cwiseProduct(w).sum();
}

double gradient_error(Mlp<double>& net, const MatrixXd& x, const MatrixXd& w) {
  MlpTape<double> tape;
  mlp_forward(net, x, &tape);
  auto grad = MlpGradient<double>::zeros_like(net);
  mlp_backward(net, tape, w, grad);
  return testing::max_gradient_error(mlp_parameters(net), mlp_flatten(grad),
                                     [&] { return probe_loss(net, x, w); });
}

TEST(Mlp, ZeroNetGivesZero) {
  Mlp<double> net;
  net.layers.push_back({MatrixXd::Zero(3, 4), VectorXd::Zero(3), Activation::Identity});
  EXPECT_EQ(mlp_forward(net, VectorXd::Ones(4)), MatrixXd::Zero(3, 1));
}

TEST(Mlp, IdentityNet) {
  const auto net = identity_net(3);
  const VectorXd x = VectorXd::LinSpaced(3, -1, 1);
  EXPECT_EQ(mlp_forward(net, x), MatrixXd(x));
  MlpTape<double> tape;
  mlp_forward(net, x, &tape);
  auto grad = MlpGradient<double>::zeros_like(net);
  const MatrixXd g = VectorXd::LinSpaced(3, 2, 4);
  EXPECT_EQ(mlp_backward(net, tape, g, grad), g);
}

TEST(Mlp, ZeroOutputGradient) {
  testing::Rng rng(1);
  const auto net = make_mlp<double>({5, 7, 2}, Activation::LeakyRelu, Activation::Sigmoid, rng);
  MlpTape<double> tape;
  mlp_forward(net, testing::random_vector(rng, 5), &tape);
  auto grad = MlpGradient<double>::zeros_like(net);
  const MatrixXd dx = mlp_backward(net, tape, MatrixXd(MatrixXd::Zero(2, 1)), grad);
  EXPECT_TRUE(dx.isZero(0.0));
  for (const auto& w : grad.weight) EXPECT_TRUE(w.isZero(0.0));
  for (const auto& b : grad.bias) EXPECT_TRUE(b.isZero(0.0));
}

TEST(Mlp, DimensionMismatch) {
  const auto net = identity_net(3);
  EXPECT_THROW(mlp_forward(net, VectorXd::Ones(4)), ValidationError);
}

TEST(Mlp, Construction) {
  testing::Rng rng(2);
  const auto net = make_mlp<double>({6, 10, 3}, Activation::LeakyRelu, Activation::Identity, rng);
  ASSERT_EQ(net.layers.size(), 2u);
  EXPECT_EQ(net.in_dim(), 6);
  EXPECT_EQ(net.out_dim(), 3);
  EXPECT_EQ(net.parameter_count(), 6 * 10 + 10 + 10 * 3 + 3);
  EXPECT_EQ(net.layers[0].activation, Activation::LeakyRelu);
  EXPECT_EQ(net.layers[1].activation, Activation::Identity);
  EXPECT_TRUE(net.layers[0].bias.isZero(0.0));
  EXPECT_LE(net.layers[0].weight.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 16.0));
}

TEST(Mlp, ActivationNames) {
  for (auto a : {Activation::Identity, Activation::LeakyRelu, Activation::Sigmoid}) {
    EXPECT_EQ(activation_from_string(to_string(a)), a);
  }
  EXPECT_THROW(activation_from_string("tanh"), ValidationError);
}

TEST(Mlp, SigmoidIsStableForLargeInputs) {
  EXPECT_EQ(detail::sigmoid(800.0), 1.0);
  EXPECT_EQ(detail::sigmoid(-800.0), 0.0);
  EXPECT_DOUBLE_EQ(detail::sigmoid(0.0), 0.5);
}

TEST(Mlp, BatchIsColumnwise) {
  testing::Rng rng(3);
  const auto net = make_mlp<double>({4, 8, 2}, Activation::LeakyRelu, Activation::Identity, rng);
  MatrixXd x(4, 3);
  for (Index c = 0; c < 3; ++c) x.col(c) = testing::random_vector(rng, 4);
  const MatrixXd y = mlp_forward(net, x);
  for (Index c = 0; c < 3; ++c) EXPECT_TRUE(y.col(c).isApprox(mlp_forward(net, x.col(c))));
}

TEST(MlpGradient, IsolatedDenseLayers) {
  testing::Rng rng(4);
  for (auto act : {Activation::Identity, Activation::LeakyRelu, Activation::Sigmoid}) {
    auto layer = make_mlp<double>({5, 4}, act, act, rng);
    layer.layers[0].bias = testing::random_vector(rng, 4, 0.5);
    MatrixXd x(5, 3);
    for (Index c = 0; c < 3; ++c) x.col(c) = testing::random_vector(rng, 5);
    MatrixXd w(4, 3);
    for (Index c = 0; c < 3; ++c) w.col(c) = testing::random_vector(rng, 4);
    EXPECT_LT(gradient_error(layer, x, w), 1e-4) << to_string(act);
  }
}

TEST(MlpGradient, TwoLayerNetworks) {
  testing::Rng rng(5);
  for (auto out : {Activation::Identity, Activation::Sigmoid}) {
    auto net = make_mlp<double>({6, 9, 2}, Activation::LeakyRelu, out, rng);
    MatrixXd x(6, 4);
    for (Index c = 0; c < 4; ++c) x.col(c) = testing::random_vector(rng, 6);
    MatrixXd w(2, 4);
    for (Index c = 0; c < 4; ++c) w.col(c) = testing::random_vector(rng, 2);
    EXPECT_LT(gradient_error(net, x, w), 1e-3);
  }
}

TEST(MlpGradient, InputGradient) {
  testing::Rng rng(6);
  const auto net = make_mlp<double>({3, 5, 2}, Activation::LeakyRelu, Activation::Sigmoid, rng);
  VectorXd x = testing::random_vector(rng, 3);
  const VectorXd w = testing::random_vector(rng, 2);
  MlpTape<double> tape;
  mlp_forward(net, x, &tape);
  auto grad = MlpGradient<double>::zeros_like(net);
  const MatrixXd dx = mlp_backward(net, tape, MatrixXd(w), grad);
  for (Index k = 0; k < 3; ++k) {
    const double h = 1e-6;
    VectorXd up = x, down = x;
    up(k) += h;
    down(k) -= h;
    const double fd = (probe_loss(net, up, w) - probe_loss(net, down, w)) / (2 * h);
    EXPECT_LT(testing::relative_error(dx(k, 0), fd), 1e-4);
  }
}

TEST(MlpGradient, PreActivationHead) {
  testing::Rng rng(7);
  auto net = make_mlp<double>({3, 4, 1}, Activation::LeakyRelu, Activation::Sigmoid, rng);
  const VectorXd x = testing::random_vector(rng, 3);
  MlpTape<double> tape;
  mlp_forward(net, x, &tape);
  auto grad = MlpGradient<double>::zeros_like(net);
  mlp_backward(net, tape, MatrixXd(MatrixXd::Ones(1, 1)), grad, true);
  // d(pre-activation)/d(last bias) = 1.
  EXPECT_DOUBLE_EQ(grad.bias.back()(0), 1.0);
}

}  // namespace
}  // namespace nebp
