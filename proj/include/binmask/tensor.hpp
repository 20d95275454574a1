#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace binmask {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

/// Row-major parameter tensor with a gradient buffer of the same shape.
struct DenseMatrix {
  Matrix values;
  Matrix grad;

  DenseMatrix() = default;
  DenseMatrix(Eigen::Index rows, Eigen::Index cols)
      : values(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  Eigen::Index size() const { return values.size(); }

  void zero_grad() { grad.setZero(values.rows(), values.cols()); }

  std::span<double> flat() { return {values.data(), static_cast<std::size_t>(values.size())}; }
  std::span<const double> flat() const {
    return {values.data(), static_cast<std::size_t>(values.size())};
  }
  std::span<double> flat_grad() { return {grad.data(), static_cast<std::size_t>(grad.size())}; }
  std::span<const double> flat_grad() const {
    return {grad.data(), static_cast<std::size_t>(grad.size())};
  }
};

}  // namespace binmask
