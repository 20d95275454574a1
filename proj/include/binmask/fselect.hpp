#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "binmask/error.hpp"
#include "binmask/train.hpp"

namespace binmask {

/// Architecture and training protocol of the classifier used both for
/// selecting features and for evaluating a selection.
struct ClassifierSpec {
  /// Explicit hidden stack; when non-empty it replaces hidden/activation/
  /// batch_norm. Input dims are filled in by build_classifier and an output
  /// Linear layer is appended.
  std::vector<LayerSpec> layers;
  std::vector<int> hidden{64, 20};
  LayerKind activation = LayerKind::Tanh;
  bool batch_norm = false;
  double dropout = 0.0;          // dropout after each hidden block
  TrainConfig train;             // loss is derived from the class count
  std::size_t min_batches = 30;  // small training sets are duplicated up to this
};

/// Sigmoid BCE for two classes, softmax cross-entropy otherwise.
LossKind loss_for(int num_classes);

Network build_classifier(const ClassifierSpec& spec, int input_dim, int num_classes, Rng& rng);

/// Mask defaults for selection: alpha0 = 0.02, everything else default.
MaskHyper selection_mask_defaults();

struct SearchStep {
  double lambda = 0.0;
  std::size_t strict_count = 0;  // entries >= upper cutoff
  std::size_t loose_count = 0;   // entries >= lower cutoff
};

struct SelectionResult {
  std::vector<std::size_t> selected;
  double lambda_star = 0.0;
  double cutoff = 0.5;
  std::vector<double> smoothed;
  bool converged = false;
  int search_steps = 0;
  std::vector<SearchStep> history;
  std::vector<EpochMetrics> metrics;  // of the accepted training run, when known

  nlohmann::json to_json() const;
};

/// Raised when the exact-k search spends its budget without a hit.
class SearchExhausted : public Error {
 public:
  SearchExhausted(std::size_t k, std::vector<SearchStep> history);
  const std::vector<SearchStep>& history() const { return history_; }
  /// The step whose achievable count range lies closest to k.
  const SearchStep& closest() const;

 private:
  std::size_t k_;
  std::vector<SearchStep> history_;
};

struct SearchOptions {
  double lambda0 = 1e-3;
  int budget = 12;  // training runs
  double cutoff_low = 0.2;
  double cutoff_high = 0.8;
};

/// Cutoff c in [low, high] with exactly k entries >= c, chosen halfway
/// between the k-th and (k+1)-th largest values and clamped into the band.
std::optional<double> exact_k_cutoff(std::span<const double> smoothed, std::size_t k,
                                     double low = 0.2, double high = 0.8);

/// Indices i with smoothed_i >= cutoff, ascending.
std::vector<std::size_t> threshold_select(std::span<const double> smoothed, double cutoff);

/// Smoothed input mask after one training run with the given lambda.
using SmoothedMaskFn = std::function<std::vector<double>(double lambda)>;

struct MaskRun {
  std::vector<double> smoothed;
  std::vector<EpochMetrics> metrics;
};

/// Trains the classifier with an input-feature mask and returns the final
/// smoothed mask. `train` is duplicated up to spec.min_batches first.
MaskRun train_smoothed_mask(const Dataset& train, const ClassifierSpec& spec, double lambda,
                            std::uint64_t seed, const MaskHyper& hyper = selection_mask_defaults());

/// Features whose final smoothed mask value is at least 0.5.
SelectionResult select_by_lambda(const Dataset& train, const ClassifierSpec& spec, double lambda,
                                 std::uint64_t seed,
                                 const MaskHyper& hyper = selection_mask_defaults());

/// Exponential search over lambda for exactly k features: double lambda
/// while too many features survive the strictest cutoff, halve while too
/// few survive the loosest, and bisect log(lambda) once bracketed. Throws
/// SearchExhausted when the budget runs out.
SelectionResult select_exact_k(std::size_t k, const SmoothedMaskFn& run,
                               const SearchOptions& options = {});

SelectionResult select_exact_k(const Dataset& train, const ClassifierSpec& spec, std::size_t k,
                               std::uint64_t seed, const SearchOptions& options = {},
                               const MaskHyper& hyper = selection_mask_defaults());

struct RetrainResult {
  std::vector<double> accuracies;
  std::vector<double> losses;
  double mean_accuracy = 0.0;
  std::optional<double> ci95_halfwidth;
  double mean_loss = 0.0;
};

/// Retrains the classifier from fresh initializations (seeds seed + t) on the
/// selected columns only and reports test accuracy and loss.
RetrainResult retrain_eval(const Dataset& train, const Dataset& test,
                           std::span<const std::size_t> selected, const ClassifierSpec& spec,
                           std::size_t trials, std::uint64_t seed);

/// Feature counts n - i * floor(n / 5) for i = 0..4, dropping non-positive ones.
std::vector<std::size_t> feature_count_sweep(std::size_t n_selected);

}  // namespace binmask
