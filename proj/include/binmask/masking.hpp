#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "binmask/mask_state.hpp"
#include "binmask/network.hpp"

namespace binmask {

/// Binds a contiguous block of mask entries either to input feature columns
/// or elementwise to one parameter tensor.
struct MaskBinding {
  enum class Target { InputFeatures, WeightTensor };
  Target target = Target::InputFeatures;
  std::size_t param_id = 0;  // WeightTensor only
  std::size_t first = 0;     // InputFeatures: first feature column
  std::size_t count = 0;     // entries bound
  std::size_t offset = 0;    // position of the block inside the mask vector
};

/// Declares which inputs and weights carry a mask bit. Entries not bound
/// pass through unchanged.
class MaskSpec {
 public:
  MaskSpec() = default;

  /// Mask on input columns [first, first + count).
  MaskSpec& add_input_features(std::size_t first, std::size_t count);
  /// Elementwise mask on one parameter tensor of `net`.
  MaskSpec& add_weight_tensor(const Network& net, std::size_t param_id);

  static MaskSpec input_features(std::size_t input_dim);
  /// Every Linear weight matrix of `net`; biases are never masked.
  static MaskSpec all_weights(const Network& net);

  /// Throws ConfigError unless the bindings are disjoint and fit `net`.
  void validate(const Network& net) const;

  const std::vector<MaskBinding>& bindings() const { return bindings_; }
  /// Number of mask entries.
  std::size_t k() const { return k_; }
  /// Inputs plus parameter scalars of `net`: the maskable universe.
  static std::size_t n(const Network& net);

  bool masks_inputs() const;
  bool masks_weights() const;

  nlohmann::json to_json() const;
  static MaskSpec from_json(const nlohmann::json& j, const Network& net);

 private:
  std::vector<MaskBinding> bindings_;
  std::size_t k_ = 0;
};

struct MaskedTensors {
  Matrix inputs;
  std::vector<Matrix> params;
};

/// Copies of the inputs and parameter values with bound entries multiplied
/// by their bit. The originals are left untouched.
MaskedTensors apply_mask(const MaskSpec& spec, std::span<const std::uint8_t> bits,
                         const Matrix& inputs, const std::vector<DenseMatrix>& params);

/// In-place input masking for the training loop.
void mask_inputs_inplace(const MaskSpec& spec, std::span<const std::uint8_t> bits, Matrix& inputs);

/// Gradient of the loss with respect to each mask entry, given the backward
/// pass through the masked network: W_i * dW'_i for weights and
/// sum_rows x_ri * dx'_ri for input features. `params` holds the unmasked
/// values W with the masked-network gradients dW' in `grad`; `inputs` are
/// the unmasked inputs. `dinputs` may be null when no input feature is bound.
std::vector<double> mask_grad(const MaskSpec& spec, std::span<const std::uint8_t> bits,
                              const Matrix& inputs, const std::vector<DenseMatrix>& params,
                              const Matrix* dinputs);

/// dW_i = b_i * dW'_i.
Matrix weight_grad_through_mask(std::span<const std::uint8_t> bits, const Matrix& dmasked);

/// Swaps masked weight values into a network for the lifetime of the object
/// and restores the original values on destruction. While active, the
/// originals are readable through original().
class ScopedWeightMask {
 public:
  ScopedWeightMask(const MaskSpec& spec, std::span<const std::uint8_t> bits, Network& net);
  ~ScopedWeightMask();
  ScopedWeightMask(const ScopedWeightMask&) = delete;
  ScopedWeightMask& operator=(const ScopedWeightMask&) = delete;

  /// Original (unmasked) values of parameter `param_id`.
  const Matrix& original(std::size_t param_id) const;

 private:
  const MaskSpec& spec_;
  Network& net_;
  std::vector<Matrix> saved_;  // indexed like params; empty when unbound
};

}  // namespace binmask
