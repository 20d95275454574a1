#include "binmask/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "binmask/error.hpp"

namespace binmask {

std::vector<Matrix> finite_diff_grad(Network net, const Matrix& batch, std::span<const int> labels,
                                     LossKind loss_kind, double step) {
  if (!(step > 0.0)) throw InputError("finite_diff_grad: step must be positive");
  const ForwardOptions frozen{.resample_dropout = false, .update_running_stats = false};
  auto eval = [&] {
    return loss_value(net.forward(batch, Mode::Train, nullptr, frozen), labels, loss_kind);
  };
  std::vector<Matrix> grads;
  grads.reserve(net.params().size());
  for (auto& param : net.params()) {
    Matrix g(param.rows(), param.cols());
    for (Eigen::Index k = 0; k < param.size(); ++k) {
      double& x = param.values.data()[k];
      const double saved = x;
      x = saved + step;
      const double up = eval();
      x = saved - step;
      const double down = eval();
      x = saved;
      g.data()[k] = (up - down) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

GradCheckResult check_gradients(Network& net, const Matrix& batch, std::span<const int> labels,
                                LossKind loss_kind, Rng& rng, GradCheckTolerance tol) {
  const ForwardOptions no_stats{.resample_dropout = true, .update_running_stats = false};
  const auto& logits = net.forward(batch, Mode::Train, &rng, no_stats);
  const auto loss = loss_and_grad(logits, labels, loss_kind);
  net.backward(loss.dlogits);
  const auto numeric = finite_diff_grad(net, batch, labels, loss_kind, tol.step);

  GradCheckResult result;
  for (std::size_t p = 0; p < numeric.size(); ++p) {
    const auto& analytic = net.params()[p].grad;
    for (Eigen::Index k = 0; k < analytic.size(); ++k) {
      const double a = analytic.data()[k];
      const double n = numeric[p].data()[k];
      const double abs_err = std::abs(a - n);
      const double scale = std::max(std::abs(a), std::abs(n));
      const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
      ++result.checked;
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      if (abs_err > tol.abs_floor) {
        result.max_rel_error = std::max(result.max_rel_error, rel_err);
        if (rel_err >= tol.rel_tol) ++result.failures;
      }
    }
  }
  return result;
}

RandomNetCase random_net_case(std::size_t index, Rng& rng, int max_width, int max_depth) {
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  RandomNetCase c;
  const LayerKind act = index % 2 == 0 ? LayerKind::Tanh : LayerKind::ReLU;
  const int bn_mode = static_cast<int>(index % 3);  // 0: none, 1: after activation, 2: before
  const bool dropout = index % 4 == 1 || index % 4 == 2;
  c.loss = index % 5 == 0 ? LossKind::SigmoidBCE : LossKind::SoftmaxCrossEntropy;

  const int input_dim = uniform_int(1, max_width);
  const int depth = uniform_int(1, max_depth);
  const int classes = c.loss == LossKind::SigmoidBCE ? 2 : uniform_int(2, 4);
  const int out_dim = c.loss == LossKind::SigmoidBCE ? 1 : classes;

  int in = input_dim;
  for (int d = 0; d < depth; ++d) {
    const int width = uniform_int(2, max_width);
    c.layers.push_back(LayerSpec::linear(in, width));
    if (bn_mode == 2) c.layers.push_back(LayerSpec::batch_norm(width));
    c.layers.push_back({act, width, width});
    if (bn_mode == 1) c.layers.push_back(LayerSpec::batch_norm(width));
    if (dropout) c.layers.push_back(LayerSpec::dropout(width, 0.3));
    in = width;
  }
  c.layers.push_back(LayerSpec::linear(in, out_dim));

  const int batch = uniform_int(4, 8);
  std::normal_distribution<double> normal(0.0, 1.0);
  c.batch.resize(batch, input_dim);
  for (Eigen::Index k = 0; k < c.batch.size(); ++k) c.batch.data()[k] = normal(rng);
  c.labels.resize(batch);
  for (auto& y : c.labels) y = uniform_int(0, classes - 1);
  return c;
}

GradCheckSuiteResult run_gradcheck_suite(std::size_t nets, std::uint64_t seed, int max_width,
                                         int max_depth, GradCheckTolerance tol) {
  const auto start = std::chrono::steady_clock::now();
  GradCheckSuiteResult out;
  Rng rng(seed);
  for (std::size_t i = 0; i < nets; ++i) {
    auto c = random_net_case(i, rng, max_width, max_depth);
    Network net(c.layers, rng);
    // Non-trivial affine parameters so their gradients are exercised.
    std::normal_distribution<double> jitter(0.0, 0.1);
    for (std::size_t p = 0; p < net.params().size(); ++p) {
      if (net.param_info()[p].role == ParamRole::Weight) continue;
      for (auto& v : net.params()[p].flat()) v += jitter(rng);
    }
    const auto r = check_gradients(net, c.batch, c.labels, c.loss, rng, tol);
    ++out.nets;
    if (!r.passed()) ++out.failed_nets;
    out.max_rel_error = std::max(out.max_rel_error, r.max_rel_error);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace binmask
