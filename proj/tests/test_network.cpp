#include <gtest/gtest.h>

#include <cmath>

#include "binmask/error.hpp"
#include "binmask/gradcheck.hpp"
#include "binmask/loss.hpp"
#include "binmask/network.hpp"

using namespace binmask;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST(Forward, IdentityLinear) {
  Rng rng(1);
  Network net({LayerSpec::linear(2, 2)}, rng);
  net.params()[0].values = Matrix::Identity(2, 2);
  net.params()[1].values.setZero();
  const Matrix& y = net.forward(mat({{3, 4}}), Mode::Eval);
  EXPECT_DOUBLE_EQ(y(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(y(0, 1), 4.0);
}

TEST(Forward, TanhOfZero) {
  Rng rng(1);
  Network net({LayerSpec::tanh(1)}, rng);
  EXPECT_EQ(net.forward(mat({{0}}), Mode::Eval)(0, 0), 0.0);
}

TEST(Forward, LinearArithmetic) {
  Rng rng(1);
  Network net({LayerSpec::linear(2, 1)}, rng);
  net.params()[0].values = mat({{1}, {1}});
  net.params()[1].values.setZero();
  EXPECT_DOUBLE_EQ(net.forward(mat({{0.5, 0.25}}), Mode::Eval)(0, 0), 0.75);
}

TEST(Forward, WrongWidthIsConfigError) {
  Rng rng(1);
  Network net({LayerSpec::linear(3, 1)}, rng);
  EXPECT_THROW(net.forward(mat({{1, 2}}), Mode::Eval), ConfigError);
}

TEST(Forward, NonFiniteActivationNamesLayer) {
  Rng rng(1);
  Network net({LayerSpec::linear(1, 1), LayerSpec::tanh(1)}, rng);
  net.params()[0].values(0, 0) = 1e308;
  try {
    net.forward(mat({{1e308}}), Mode::Eval);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos) << e.what();
  }
}

TEST(Network, RejectsMismatchedChain) {
  Rng rng(1);
  EXPECT_THROW(Network({LayerSpec::linear(2, 3), LayerSpec::linear(4, 1)}, rng), ConfigError);
  EXPECT_THROW(Network({LayerSpec::dropout(2, 1.0)}, rng), ConfigError);
}

TEST(Backward, ZeroUpstreamGivesZeroGrads) {
  Rng rng(3);
  Network net(mlp_layers(4, {5}, 2, LayerKind::Tanh, true), rng);
  Matrix x = Matrix::Random(6, 4);
  net.forward(x, Mode::Train, &rng);
  net.backward(Matrix::Zero(6, 2), true);
  for (const auto& p : net.params()) EXPECT_EQ(p.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, ScalarChainRule) {
  Rng rng(1);
  Network net({LayerSpec::linear(1, 1)}, rng);
  net.params()[0].values(0, 0) = 2.0;
  net.params()[1].values(0, 0) = 0.0;
  net.forward(mat({{3}}), Mode::Train, &rng);
  net.backward(mat({{1}}), true);
  EXPECT_DOUBLE_EQ(net.params()[0].grad(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(net.params()[1].grad(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(net.input_grad()(0, 0), 2.0);
}

TEST(Backward, WithoutForwardIsStateError) {
  Rng rng(1);
  Network net({LayerSpec::linear(1, 1)}, rng);
  EXPECT_THROW(net.backward(mat({{1}})), StateError);
  net.forward(mat({{1}}), Mode::Eval);
  EXPECT_THROW(net.backward(mat({{1}})), StateError);
}

TEST(Backward, RandomThreeLayerMatchesFiniteDifferences) {
  Rng rng(11);
  Network net(mlp_layers(6, {8, 7}, 3, LayerKind::Tanh), rng);
  Matrix x = Matrix::Random(5, 6);
  std::vector<int> y{0, 2, 1, 1, 0};
  const auto r = check_gradients(net, x, y, LossKind::SoftmaxCrossEntropy, rng);
  EXPECT_TRUE(r.passed()) << r.max_rel_error;
  EXPECT_GT(r.checked, 100u);
}

TEST(Network, BatchNormRunningStatsUseUnbiasedVariance) {
  Rng rng(1);
  Network net({LayerSpec::batch_norm(1)}, rng);
  net.forward(mat({{1}, {3}}), Mode::Train, &rng);
  EXPECT_DOUBLE_EQ(net.running_mean(0)(0), 0.1 * 2.0);
  EXPECT_DOUBLE_EQ(net.running_var(0)(0), 0.9 * 1.0 + 0.1 * 2.0);
}

TEST(Network, DropoutIsIdentityInEval) {
  Rng rng(1);
  Network net({LayerSpec::dropout(3, 0.5)}, rng);
  Matrix x = mat({{1, 2, 3}});
  EXPECT_EQ(net.forward(x, Mode::Eval), x);
  const Matrix& y = net.forward(x, Mode::Train, &rng);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_TRUE(y(0, j) == 0.0 || y(0, j) == 2.0 * x(0, j));
}

TEST(Network, KaimingForReluXavierOtherwise) {
  Rng rng(5);
  Network net({LayerSpec::linear(100, 50), LayerSpec::relu(50), LayerSpec::linear(50, 100)}, rng);
  const double kaiming = std::sqrt(6.0 / 100.0);
  const double xavier = std::sqrt(6.0 / 150.0);
  EXPECT_LE(net.params()[0].values.cwiseAbs().maxCoeff(), kaiming);
  EXPECT_GT(net.params()[0].values.cwiseAbs().maxCoeff(), xavier);
  EXPECT_LE(net.params()[2].values.cwiseAbs().maxCoeff(), xavier);
  EXPECT_EQ(net.params()[1].values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Loss, BceAtZeroLogit) {
  const auto r = loss_and_grad(mat({{0}}), std::vector<int>{1}, LossKind::SigmoidBCE);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(r.dlogits(0, 0), -0.5, 1e-15);
}

TEST(Loss, SoftmaxUniform) {
  const auto r = loss_and_grad(mat({{0, 0}}), std::vector<int>{0}, LossKind::SoftmaxCrossEntropy);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(r.dlogits(0, 0), -0.5, 1e-15);
  EXPECT_NEAR(r.dlogits(0, 1), 0.5, 1e-15);
}

TEST(Loss, StableForHugeLogits) {
  const auto r = loss_and_grad(mat({{1000, -1000}}), std::vector<int>{1}, LossKind::SoftmaxCrossEntropy);
  EXPECT_NEAR(r.loss, 2000.0, 1e-9);
  const auto b = loss_and_grad(mat({{-800}}), std::vector<int>{1}, LossKind::SigmoidBCE);
  EXPECT_NEAR(b.loss, 800.0, 1e-9);
}

TEST(Loss, LabelOutOfRange) {
  EXPECT_THROW(loss_and_grad(mat({{0, 0}}), std::vector<int>{2}, LossKind::SoftmaxCrossEntropy),
               InputError);
  EXPECT_THROW(loss_and_grad(mat({{0}}), std::vector<int>{-1}, LossKind::SigmoidBCE), InputError);
}

TEST(Loss, RandomLogitsMatchFiniteDifferences) {
  Rng rng(2);
  std::uniform_real_distribution<double> u(-3, 3);
  Matrix logits(4, 3);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = u(rng);
  std::vector<int> y{2, 0, 1, 2};
  const auto r = loss_and_grad(logits, y, LossKind::SoftmaxCrossEntropy);
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    Matrix up = logits, down = logits;
    up.data()[i] += h;
    down.data()[i] -= h;
    const double fd = (loss_value(up, y, LossKind::SoftmaxCrossEntropy) -
                       loss_value(down, y, LossKind::SoftmaxCrossEntropy)) /
                      (2 * h);
    const double an = r.dlogits.data()[i];
    EXPECT_TRUE(std::abs(fd - an) <= 1e-8 || std::abs(fd - an) / std::abs(an) < 1e-4) << i;
  }
}

TEST(FiniteDiff, QuadraticToyNet) {
  // Single linear unit with BCE is smooth; compare with the closed form
  // dL/dw = (sigmoid(w x) - y) x.
  Rng rng(1);
  Network net({LayerSpec::linear(1, 1)}, rng);
  net.params()[0].values(0, 0) = 0.7;
  net.params()[1].values(0, 0) = -0.2;
  const Matrix x = mat({{1.5}});
  const std::vector<int> y{1};
  const auto g = finite_diff_grad(net, x, y, LossKind::SigmoidBCE, 1e-5);
  const double z = 0.7 * 1.5 - 0.2;
  const double s = 1.0 / (1.0 + std::exp(-z));
  EXPECT_NEAR(g[0](0, 0), (s - 1.0) * 1.5, 1e-6);
  EXPECT_NEAR(g[1](0, 0), s - 1.0, 1e-6);
}

TEST(FiniteDiff, ZeroLossGivesZeroGradient) {
  Rng rng(1);
  Network net({LayerSpec::linear(2, 2)}, rng);
  net.params()[0].values.setZero();
  net.params()[1].values = mat({{800, -800}});
  const auto g = finite_diff_grad(net, mat({{0.1, 0.2}}), std::vector<int>{0},
                                  LossKind::SoftmaxCrossEntropy, 1e-5);
  for (const auto& m : g) EXPECT_EQ(m.cwiseAbs().maxCoeff(), 0.0);
}

TEST(GradCheck, AgreesWithBackwardOnAllLayerKinds) {
  const auto r = run_gradcheck_suite(12, 99);
  EXPECT_EQ(r.nets, 12u);
  EXPECT_EQ(r.failed_nets, 0u) << r.max_rel_error;
}

TEST(GradCheck, RandomCasesCoverAllLayerKinds) {
  Rng rng(0);
  bool seen[5] = {};
  for (std::size_t i = 0; i < 12; ++i) {
    for (const auto& l : random_net_case(i, rng).layers) seen[static_cast<int>(l.kind)] = true;
  }
  for (bool s : seen) EXPECT_TRUE(s);
}
