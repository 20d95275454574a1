#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "binmask/optim.hpp"

namespace binmask {

/// Binary mask bits, each 0 or 1.
using BinaryMask = std::vector<std::uint8_t>;

/// Hyperparameters of the binary-mask regularizer.
struct MaskHyper {
  double alpha0 = 0.3;            // initial latent value
  double alpha1 = 1.0;            // latent clip bound
  double lambda = 0.0;            // L0 penalty coefficient
  double gamma = 0.9;             // smoothing factor of the moving-average mask
  double eta0 = 1e-3;             // initial mask learning rate
  double eta1 = 1e-5;             // final mask learning rate
  double warmup_fraction = 0.1;   // fraction of epochs with frozen masks
};

/// out_i = 1 iff latent_i >= 0. Zero maps to 1.
BinaryMask quantize(std::span<const double> latent);

/// Identity straight-through gradient of the quantizer.
std::vector<double> ste_backward(std::span<const double> grad_wrt_bits);

/// Gradient of the quadratic penalty (lambda / 2) * ||b||^2, i.e. lambda * b.
std::vector<double> penalty_grad(std::span<const std::uint8_t> bits, double lambda);

/// True iff at most 20% of the entries lie in [0.15, 0.85] (inclusive).
bool mask_converged(std::span<const double> smoothed);

/// round(warmup_fraction * epochs), rounding half away from zero.
int warmup_epochs(int epochs, double warmup_fraction);

/// Latent mask weights and everything derived from them during training.
///
/// Invariants maintained by every mutator: bits() == quantize(latent()),
/// |latent_i| <= alpha1, smoothed entries in [0, 1]. A frozen state rejects
/// mask_update.
class MaskState {
 public:
  MaskState() = default;
  MaskState(std::size_t size, MaskHyper hyper);

  /// g = task_grad + lambda * b; latent <- clip(Adam(latent, g, lr)); b <- q(latent).
  void mask_update(std::span<const double> task_grad_wrt_bits, double lr);

  /// smoothed <- gamma * smoothed + (1 - gamma) * b.
  void smooth_update();

  std::size_t size() const { return latent_.size(); }
  const std::vector<double>& latent() const { return latent_; }
  const BinaryMask& bits() const { return bits_; }
  const std::vector<double>& smoothed() const { return smoothed_; }
  const AdamState& adam() const { return adam_; }
  const MaskHyper& hyper() const { return hyper_; }

  bool frozen() const { return frozen_; }
  void set_frozen(bool frozen) { frozen_ = frozen; }

  /// Reported penalty value (lambda / 2) * ||b||^2 = (lambda / 2) * #ones.
  double penalty() const;
  std::size_t active() const;
  /// Fraction of zero bits.
  double sparsity() const;

  /// Overwrites the latent weights (clipped) and re-derives the bits.
  void set_latent(std::vector<double> latent);

  nlohmann::json to_json() const;
  static MaskState from_json(const nlohmann::json& j);

 private:
  std::vector<double> latent_;
  BinaryMask bits_;
  std::vector<double> smoothed_;
  AdamState adam_;
  MaskHyper hyper_;
  bool frozen_ = false;
};

}  // namespace binmask
