#include "binmask/loss.hpp"

#include <algorithm>
#include <cmath>

#include "binmask/error.hpp"

namespace binmask {

namespace {

void check_labels(const Matrix& logits, std::span<const int> labels, LossKind kind) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw InputError("loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(logits.rows()) + " rows");
  }
  if (logits.rows() == 0) throw InputError("loss: empty batch");
  const int classes = kind == LossKind::SigmoidBCE ? 2 : static_cast<int>(logits.cols());
  if (kind == LossKind::SigmoidBCE && logits.cols() != 1) {
    throw InputError("loss: sigmoid BCE expects one logit column");
  }
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || labels[r] >= classes) {
      throw InputError("loss: label " + std::to_string(labels[r]) + " at row " +
                       std::to_string(r) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

template <bool WithGrad>
double compute(const Matrix& logits, std::span<const int> labels, LossKind kind, Matrix* grad) {
  check_labels(logits, labels, kind);
  const Eigen::Index n = logits.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  if constexpr (WithGrad) grad->resize(logits.rows(), logits.cols());
  if (kind == LossKind::SigmoidBCE) {
    for (Eigen::Index r = 0; r < n; ++r) {
      const double z = logits(r, 0);
      const double y = labels[r];
      total += softplus(z) - y * z;
      if constexpr (WithGrad) (*grad)(r, 0) = (sigmoid(z) - y) * inv_n;
    }
  } else {
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto row = logits.row(r);
      const double mx = row.maxCoeff();
      const double sum = (row.array() - mx).exp().sum();
      const double lse = mx + std::log(sum);
      total += lse - row(labels[r]);
      if constexpr (WithGrad) {
        grad->row(r) = ((row.array() - lse).exp() * inv_n).matrix();
        (*grad)(r, labels[r]) -= inv_n;
      }
    }
  }
  const double loss = total * inv_n;
  if (!std::isfinite(loss)) throw NumericalError("loss: non-finite loss value");
  return loss;
}

}  // namespace

std::string to_string(LossKind kind) {
  return kind == LossKind::SigmoidBCE ? "sigmoid_bce" : "softmax_cross_entropy";
}

LossResult loss_and_grad(const Matrix& logits, std::span<const int> labels, LossKind kind) {
  LossResult out;
  out.loss = compute<true>(logits, labels, kind, &out.dlogits);
  return out;
}

double loss_value(const Matrix& logits, std::span<const int> labels, LossKind kind) {
  return compute<false>(logits, labels, kind, nullptr);
}

Vector positive_scores(const Matrix& logits, LossKind kind) {
  Vector scores(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (kind == LossKind::SigmoidBCE) {
      scores(r) = sigmoid(logits(r, 0));
    } else {
      if (logits.cols() < 2) throw InputError("positive_scores: need at least two classes");
      const auto row = logits.row(r);
      const double mx = row.maxCoeff();
      scores(r) = std::exp(row(1) - mx) / (row.array() - mx).exp().sum();
    }
  }
  return scores;
}

double accuracy(const Matrix& logits, std::span<const int> labels, LossKind kind) {
  check_labels(logits, labels, kind);
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    int predicted = 0;
    if (kind == LossKind::SigmoidBCE) {
      predicted = logits(r, 0) >= 0.0 ? 1 : 0;
    } else {
      Eigen::Index arg = 0;
      logits.row(r).maxCoeff(&arg);
      predicted = static_cast<int>(arg);
    }
    if (predicted == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace binmask
