#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "binmask/dataset.hpp"
#include "binmask/loss.hpp"
#include "binmask/mask_state.hpp"
#include "binmask/masking.hpp"
#include "binmask/network.hpp"
#include "binmask/optim.hpp"

namespace binmask {

enum class OptimizerKind { SgdMomentum, AdamW };

enum class RegularizerKind { None, BinMask, L1, L2, Dropout };

std::string to_string(RegularizerKind kind);
RegularizerKind parse_regularizer(const std::string& name);

/// BinMask(lambda), L1(lambda), L2(weight decay) or Dropout(p).
struct Regularizer {
  RegularizerKind kind = RegularizerKind::None;
  double value = 0.0;
};

struct MaskConfig {
  MaskSpec spec;
  MaskHyper hyper;
};

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 256;
  double lr_start = 0.1;  // cosine-annealed per epoch
  double lr_end = 1e-5;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  OptimizerKind optimizer = OptimizerKind::SgdMomentum;
  LossKind loss = LossKind::SoftmaxCrossEntropy;
  Regularizer regularizer;
  /// Required for the BinMask regularizer; a mask with lambda 0 is allowed
  /// under any regularizer.
  std::optional<MaskConfig> mask;
  bool early_stopping = false;
  /// Extra epochs with the mask frozen, annealing from lr_start / 10 to lr_end.
  int finetune_epochs = 0;
  std::uint64_t seed = 0;  // minibatch order and dropout
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> test_loss;
  std::optional<double> test_accuracy;
  std::optional<double> validation_auc;
  std::optional<double> sparsity;
  std::optional<double> mask_lr;
};

/// Header and row of the per-epoch CSV. Empty fields mark values that do
/// not apply; reals are printed with 17 significant digits.
std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

struct TrainData {
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;
  const Dataset* validation = nullptr;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::optional<double> auc;
};

/// One training run broken into epochs and iterations. Each iteration
/// quantizes the latent mask, updates the smoothed mask, masks inputs and
/// weights, back-propagates through the masked network, steps the weight
/// optimizer with b * dW', and, when the mask is trainable, steps the
/// latent mask weights with Adam on the task gradient plus lambda * b.
class Trainer {
 public:
  Trainer(Network net, TrainConfig config);

  /// Sets the weight learning rate and, past warmup, unfreezes the mask and
  /// sets its learning rate. Epochs at or beyond `epochs` are finetuning.
  void begin_epoch(int epoch);

  /// One iteration on a minibatch; returns the batch task loss.
  double train_step(const Matrix& inputs, std::span<const int> labels);

  /// Eval-mode metrics with the current mask applied.
  EvalResult evaluate(const Dataset& data);
  /// Eval-mode logits with the current mask applied.
  Matrix predict(const Matrix& inputs);

  Network& net() { return net_; }
  const Network& net() const { return net_; }
  std::optional<MaskState>& mask() { return mask_; }
  const TrainConfig& config() const { return config_; }
  int warmup_epochs() const { return warmup_epochs_; }
  double weight_lr() const { return weight_lr_; }
  std::optional<double> mask_lr() const { return mask_lr_; }
  Rng& rng() { return rng_; }

  /// Overrides the learning rate set by begin_epoch.
  void set_weight_lr(double lr);

 private:
  Network net_;
  TrainConfig config_;
  std::optional<MaskState> mask_;
  int warmup_epochs_ = 0;
  double weight_lr_ = 0.0;
  std::optional<double> mask_lr_;
  SgdState sgd_;
  AdamWState adamw_;
  Rng rng_;
  Matrix masked_inputs_;
};

struct TrainResult {
  Network net;
  std::optional<MaskState> mask;
  std::vector<EpochMetrics> metrics;
  int selected_epoch = -1;  // last epoch, or the early-stopping choice
};

/// Runs the full loop: per epoch, shuffle once and take floor(N / batch)
/// minibatches (one batch of N when N < batch), then record metrics.
/// Non-finite losses abort with the epoch and iteration in the message.
TrainResult train(Network net, const TrainData& data, const TrainConfig& config);

/// train() with an L1(lambda) regularizer on the Linear weights and no mask.
TrainResult train_with_l1(Network net, const Dataset& data, double lambda, TrainConfig config = {});

/// Index of the largest validation AUC; ties go to the earliest epoch.
std::size_t early_stop_select(std::span<const double> validation_auc);

/// Generic form over per-epoch checkpoints.
template <typename Checkpoint>
const Checkpoint& early_stop_select(std::span<const Checkpoint> checkpoints,
                                    std::span<const double> validation_auc) {
  return checkpoints[early_stop_select(validation_auc)];
}

struct WeightNorms {
  double mean_l0 = 0.0;  // fraction of |w| >= 1e-4
  double mean_l1 = 0.0;  // mean |w|
  double mean_l2 = 0.0;  // sqrt(mean w^2)
};

/// Diagnostics over all Linear weights (biases excluded), after applying the
/// mask when one is given.
WeightNorms weight_norm_report(const Network& net, const MaskSpec* spec = nullptr,
                               std::span<const std::uint8_t> bits = {});

}  // namespace binmask
