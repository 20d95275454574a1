#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "binmask/tensor.hpp"

namespace binmask {

enum class LayerKind { Linear, Tanh, ReLU, BatchNorm1d, Dropout };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::Linear;
  int in_dim = 0;
  int out_dim = 0;
  double dropout_p = 0.0;
  double bn_momentum = 0.9;  // running <- momentum * running + (1 - momentum) * batch
  double bn_eps = 1e-5;

  static LayerSpec linear(int in, int out) { return {LayerKind::Linear, in, out}; }
  static LayerSpec tanh(int dim) { return {LayerKind::Tanh, dim, dim}; }
  static LayerSpec relu(int dim) { return {LayerKind::ReLU, dim, dim}; }
  static LayerSpec batch_norm(int dim) { return {LayerKind::BatchNorm1d, dim, dim}; }
  static LayerSpec dropout(int dim, double p) { return {LayerKind::Dropout, dim, dim, p}; }
};

enum class Mode { Train, Eval };

struct ForwardOptions {
  // When false, Train-mode dropout reuses the masks of the previous Train forward.
  bool resample_dropout = true;
  bool update_running_stats = true;
};

enum class ParamRole { Weight, Bias, Gamma, Beta };

struct ParamInfo {
  std::size_t layer = 0;
  ParamRole role = ParamRole::Weight;
};

/// Feedforward network with hand-written backpropagation.
///
/// Linear weights are stored as (in_dim x out_dim) so a batch (B x in_dim)
/// maps to (B x out_dim) by `x * W + b`. Parameters are laid out in layer
/// order; a Linear layer owns [weight, bias] and a BatchNorm1d layer owns
/// [gamma, beta].
class Network {
 public:
  /// Validates the layer chain and initializes parameters from `init_rng`:
  /// Kaiming-uniform for Linear layers feeding a ReLU, Xavier-uniform
  /// otherwise, zero biases, unit gamma and zero beta.
  Network(std::vector<LayerSpec> layers, Rng& init_rng);

  /// Runs the network. In Train mode the activations needed by `backward`
  /// are cached; dropout draws from `rng`, which must then be non-null
  /// unless masks are reused.
  const Matrix& forward(const Matrix& batch, Mode mode, Rng* rng = nullptr,
                        ForwardOptions options = {});

  /// Overwrites every parameter gradient with d(loss)/d(param) given the
  /// gradient of the loss with respect to the logits of the last Train
  /// forward. The input gradient is computed only when requested.
  void backward(const Matrix& dlogits, bool need_input_grad = false);

  const Matrix& input_grad() const;

  std::vector<DenseMatrix>& params() { return params_; }
  const std::vector<DenseMatrix>& params() const { return params_; }
  const std::vector<ParamInfo>& param_info() const { return param_info_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  /// Parameter ids of every Linear weight matrix (biases excluded).
  std::vector<std::size_t> weight_param_ids() const;

  int input_dim() const { return layers_.front().in_dim; }
  int output_dim() const { return layers_.back().out_dim; }
  bool has_dropout() const;

  void zero_grad();

  const Vector& running_mean(std::size_t layer) const { return state_[layer].running_mean; }
  const Vector& running_var(std::size_t layer) const { return state_[layer].running_var; }

 private:
  struct LayerState {
    int weight = -1;  // index into params_ (Linear weight or BN gamma)
    int bias = -1;    // Linear bias or BN beta
    Matrix output;
    Matrix dropout_mask;
    Vector running_mean;
    Vector running_var;
    Matrix xhat;
    RowVector inv_std;
  };

  void validate() const;
  void init_params(Rng& rng);

  std::vector<LayerSpec> layers_;
  std::vector<DenseMatrix> params_;
  std::vector<ParamInfo> param_info_;
  std::vector<LayerState> state_;
  Matrix input_;
  Matrix input_grad_;
  bool cached_ = false;
  bool has_input_grad_ = false;
};

/// Builds Linear/activation stacks such as 64/20 tanh MLPs. BatchNorm, when
/// requested, follows each hidden activation; dropout follows everything.
std::vector<LayerSpec> mlp_layers(int input_dim, const std::vector<int>& hidden, int output_dim,
                                  LayerKind activation = LayerKind::Tanh, bool batch_norm = false,
                                  double dropout_p = 0.0);

}  // namespace binmask
