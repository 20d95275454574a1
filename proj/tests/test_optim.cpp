#include <gtest/gtest.h>

#include <cmath>

#include "binmask/error.hpp"
#include "binmask/optim.hpp"

using namespace binmask;

namespace {

std::vector<DenseMatrix> scalar_param(double value, double grad) {
  std::vector<DenseMatrix> p(1, DenseMatrix(1, 1));
  p[0].values(0, 0) = value;
  p[0].grad(0, 0) = grad;
  return p;
}

}  // namespace

TEST(Sgd, ZeroEverythingLeavesParams) {
  SgdState s{0.1, 0.9, 0.0, {}};
  auto p = scalar_param(1.5, 0.0);
  sgd_step(s, p);
  EXPECT_EQ(p[0].values(0, 0), 1.5);
}

TEST(Sgd, DecayOnlyStep) {
  SgdState s{0.1, 0.0, 0.01, {}};
  auto p = scalar_param(1.0, 0.0);
  sgd_step(s, p);
  EXPECT_NEAR(p[0].values(0, 0), 0.999, 1e-15);
}

TEST(Sgd, TwoMomentumSteps) {
  // p0 = 1, g = 0.5, wd = 0.1, lr = 0.1, m = 0.9
  // buf1 = 0.5 + 0.1 = 0.6; p1 = 1 - 0.06 = 0.94
  // buf2 = 0.9 * 0.6 + 0.5 + 0.094 = 1.134; p2 = 0.94 - 0.1134 = 0.8266
  SgdState s{0.1, 0.9, 0.1, {}};
  auto p = scalar_param(1.0, 0.5);
  sgd_step(s, p);
  EXPECT_NEAR(p[0].values(0, 0), 0.94, 1e-15);
  sgd_step(s, p);
  EXPECT_NEAR(p[0].values(0, 0), 0.8266, 1e-15);
}

TEST(Sgd, NonFiniteGradient) {
  SgdState s;
  auto p = scalar_param(1.0, std::nan(""));
  EXPECT_THROW(sgd_step(s, p), NumericalError);
}

TEST(Adam, FirstStepHasMagnitudeLr) {
  for (double g : {1e-6, 0.3, 250.0}) {
    AdamState s(1);
    std::vector<double> p{0.0};
    std::vector<double> grad{g};
    adam_step(s, p, grad, 1e-3);
    EXPECT_NEAR(p[0], -1e-3, 1e-3 * 1e-2) << g;
  }
}

TEST(Adam, ZeroGradientForever) {
  AdamState s(2);
  std::vector<double> p{0.25, -1.0};
  std::vector<double> g{0.0, 0.0};
  for (int i = 0; i < 50; ++i) adam_step(s, p, g, 0.1);
  EXPECT_EQ(p[0], 0.25);
  EXPECT_EQ(p[1], -1.0);
}

TEST(Adam, ThreeStepsMatchRecurrence) {
  AdamState s(1);
  std::vector<double> p{0.5};
  std::vector<double> g{1.0};
  double m = 0, v = 0, ref = 0.5;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 3; ++t) {
    adam_step(s, p, g, lr);
    m = b1 * m + (1 - b1) * 1.0;
    v = b2 * v + (1 - b2) * 1.0;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    ref -= lr * mh / (std::sqrt(vh) + eps);
    EXPECT_NEAR(p[0], ref, 1e-15) << t;
  }
}

TEST(Adam, SizeMismatch) {
  AdamState s(2);
  std::vector<double> p{0.0, 0.0};
  std::vector<double> g{1.0};
  EXPECT_THROW(adam_step(s, p, g, 0.1), ConfigError);
}

TEST(AdamW, DecoupledDecayWithZeroGradient) {
  AdamWState s{0.01, 0.5, {}};
  auto p = scalar_param(2.0, 0.0);
  adamw_step(s, p);
  EXPECT_NEAR(p[0].values(0, 0), 2.0 * (1 - 0.01 * 0.5), 1e-15);
}

TEST(Cosine, Endpoints) {
  const CosineSchedule c{1e-3, 1e-5, 101};
  EXPECT_DOUBLE_EQ(cosine_lr(c, 0), 1e-3);
  EXPECT_NEAR(cosine_lr(c, 100), 1e-5, 1e-18);
  EXPECT_NEAR(cosine_lr(c, 50), 5.05e-4, 1e-17);
}

TEST(Cosine, SingleStepAndOutOfRange) {
  EXPECT_DOUBLE_EQ(cosine_lr({0.1, 1e-5, 1}, 0), 0.1);
  EXPECT_THROW(cosine_lr({0.1, 1e-5, 10}, 10), InputError);
}

TEST(Cosine, Monotone) {
  const CosineSchedule c{0.1, 1e-5, 30};
  for (std::size_t i = 1; i < 30; ++i) EXPECT_LT(cosine_lr(c, i), cosine_lr(c, i - 1));
}
