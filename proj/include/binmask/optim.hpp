#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "binmask/tensor.hpp"

namespace binmask {

/// SGD with momentum and coupled weight decay:
///   buf <- momentum * buf + (grad + weight_decay * param)
///   param <- param - lr * buf
struct SgdState {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<Matrix> buffers;  // lazily shaped on first step
};

void sgd_step(SgdState& state, std::vector<DenseMatrix>& params);

/// Adam over one flat parameter array. `lr` lives outside the state because
/// the mask schedule sets it per epoch.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t size) : m(size, 0.0), v(size, 0.0) {}
};

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               double lr);

/// Adam with decoupled weight decay over a parameter list:
///   param <- param * (1 - lr * weight_decay), then an Adam step.
struct AdamWState {
  double lr = 2e-3;
  double weight_decay = 0.01;
  std::vector<AdamState> slots;
};

void adamw_step(AdamWState& state, std::vector<DenseMatrix>& params);

/// lr(step) = end + (start - end) / 2 * (cos(pi * step / (total_steps - 1)) + 1)
struct CosineSchedule {
  double start_lr = 0.1;
  double end_lr = 1e-5;
  std::size_t total_steps = 1;
};

double cosine_lr(const CosineSchedule& schedule, std::size_t step);

}  // namespace binmask
