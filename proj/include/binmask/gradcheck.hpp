#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "binmask/loss.hpp"
#include "binmask/network.hpp"

namespace binmask {

/// Central-difference gradient of the batch-mean loss for every parameter.
///
/// Runs Train-mode forwards with frozen randomness: dropout reuses the masks
/// of the network's last Train forward and batch norm normalizes with batch
/// statistics without touching the running averages. The network is taken
/// by value so the caller's state is never perturbed.
std::vector<Matrix> finite_diff_grad(Network net, const Matrix& batch, std::span<const int> labels,
                                     LossKind loss_kind, double step);

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  bool passed() const { return failures == 0; }
};

/// An entry passes when |analytic - numeric| <= abs_floor or the relative
/// error |a - n| / max(|a|, |n|) is below rel_tol.
struct GradCheckTolerance {
  double step = 1e-5;
  double rel_tol = 1e-4;
  double abs_floor = 1e-8;
};

/// Compares backward() against finite_diff_grad() on one batch. Samples the
/// dropout masks with `rng` first.
GradCheckResult check_gradients(Network& net, const Matrix& batch, std::span<const int> labels,
                                LossKind loss_kind, Rng& rng, GradCheckTolerance tol = {});

struct RandomNetCase {
  std::vector<LayerSpec> layers;
  LossKind loss = LossKind::SoftmaxCrossEntropy;
  Matrix batch;
  std::vector<int> labels;
};

/// Random MLP (widths <= max_width, hidden depth <= max_depth) together with a
/// batch and labels. The `index` rotates activation, batch norm placement,
/// dropout and loss kind so that a run over consecutive indices covers every
/// layer kind.
RandomNetCase random_net_case(std::size_t index, Rng& rng, int max_width = 16, int max_depth = 3);

struct GradCheckSuiteResult {
  std::size_t nets = 0;
  std::size_t failed_nets = 0;
  double max_rel_error = 0.0;
  double seconds = 0.0;
};

GradCheckSuiteResult run_gradcheck_suite(std::size_t nets, std::uint64_t seed, int max_width = 16,
                                         int max_depth = 3, GradCheckTolerance tol = {});

}  // namespace binmask
