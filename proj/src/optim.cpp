#include "binmask/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "binmask/error.hpp"

namespace binmask {

namespace {

void check_finite(std::span<const double> grads, const char* who) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericalError(std::string(who) + ": non-finite gradient at index " +
                           std::to_string(i));
    }
  }
}

}  // namespace

void sgd_step(SgdState& state, std::vector<DenseMatrix>& params) {
  if (state.buffers.empty()) {
    for (const auto& p : params) state.buffers.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  if (state.buffers.size() != params.size()) {
    throw ConfigError("sgd_step: optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& buf = state.buffers[i];
    if (buf.rows() != p.rows() || buf.cols() != p.cols() || p.grad.size() != p.size()) {
      throw ConfigError("sgd_step: shape mismatch for parameter " + std::to_string(i));
    }
    check_finite(p.flat_grad(), "sgd_step");
    buf = state.momentum * buf + p.grad + state.weight_decay * p.values;
    p.values -= state.lr * buf;
  }
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               double lr) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ConfigError("adam_step: size mismatch");
  }
  if (!(lr >= 0.0)) throw InputError("adam_step: learning rate must be >= 0");
  check_finite(grads, "adam_step");
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

void adamw_step(AdamWState& state, std::vector<DenseMatrix>& params) {
  if (state.slots.empty()) {
    for (const auto& p : params) state.slots.emplace_back(static_cast<std::size_t>(p.size()));
  }
  if (state.slots.size() != params.size()) {
    throw ConfigError("adamw_step: optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (state.weight_decay != 0.0) p.values *= 1.0 - state.lr * state.weight_decay;
    adam_step(state.slots[i], p.flat(), p.flat_grad(), state.lr);
  }
}

double cosine_lr(const CosineSchedule& schedule, std::size_t step) {
  if (schedule.total_steps == 0 || step >= schedule.total_steps) {
    throw InputError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(schedule.total_steps) + ")");
  }
  if (schedule.total_steps == 1) return schedule.start_lr;
  const double progress =
      static_cast<double>(step) / static_cast<double>(schedule.total_steps - 1);
  return schedule.end_lr + (schedule.start_lr - schedule.end_lr) / 2.0 *
                               (std::cos(std::numbers::pi * progress) + 1.0);
}

}  // namespace binmask
