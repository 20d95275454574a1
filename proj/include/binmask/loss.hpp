#pragma once

#include <span>
#include <string>

#include "binmask/tensor.hpp"

namespace binmask {

/// SoftmaxCrossEntropy takes integer class ids against C logits; SigmoidBCE
/// takes 0/1 targets against a single logit column.
enum class LossKind { SoftmaxCrossEntropy, SigmoidBCE };

std::string to_string(LossKind kind);

struct LossResult {
  double loss = 0.0;  // mean over the batch
  Matrix dlogits;     // exact gradient of the mean
};

LossResult loss_and_grad(const Matrix& logits, std::span<const int> labels, LossKind kind);

/// Loss value only (no gradient buffer).
double loss_value(const Matrix& logits, std::span<const int> labels, LossKind kind);

/// Positive-class scores used for AUC: sigmoid output for SigmoidBCE, the
/// softmax probability of class 1 for two-class softmax.
Vector positive_scores(const Matrix& logits, LossKind kind);

/// Fraction of rows whose predicted class equals the label.
double accuracy(const Matrix& logits, std::span<const int> labels, LossKind kind);

}  // namespace binmask
