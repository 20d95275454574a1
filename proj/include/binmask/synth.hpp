#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "binmask/dataset.hpp"

namespace binmask {

/// Random two-layer tanh function of a fixed subset of input columns. The
/// label is the argmax of its outputs; for two classes the single output is
/// compared with a threshold calibrated to balance the classes.
class PlantedFunction {
 public:
  PlantedFunction(std::size_t dims, std::vector<std::size_t> informative, int num_classes,
                  Rng& rng, int hidden = 8);

  /// Raw outputs for one row of features in [0, 1]. Reads only informative columns.
  Vector scores(std::span<const double> row) const;
  int classify(std::span<const double> row) const;

  void set_threshold(double threshold) { threshold_ = threshold; }
  const std::vector<std::size_t>& informative() const { return informative_; }
  int num_classes() const { return num_classes_; }

 private:
  std::size_t dims_;
  std::vector<std::size_t> informative_;
  int num_classes_;
  Matrix first_;   // hidden x informative
  Vector bias_;    // hidden
  Matrix second_;  // outputs x hidden
  double threshold_ = 0.0;
};

struct PlantedData {
  Dataset data;
  PlantedFunction rule;
};

/// N rows of d uniform [0, 1] features. Labels come from a PlantedFunction of
/// `informative` random columns; with probability `noise` a label is replaced
/// by a uniformly drawn class. With no informative columns labels are drawn
/// uniformly.
PlantedData synth_planted(std::size_t n, std::size_t d, std::size_t informative, double noise,
                          std::uint64_t seed, int num_classes = 2);

Dataset synth_planted_features(std::size_t n, std::size_t d, std::size_t informative, double noise,
                               std::uint64_t seed, int num_classes = 2);

/// Sparse binary features (each zero with probability `sparse_rate`, else 1)
/// and a binary outcome drawn from a logistic model over a handful of
/// features plus pairwise interactions. `informative` records the columns
/// the outcome depends on.
Dataset synth_overfit_prone(std::size_t n, std::size_t d, double sparse_rate, std::uint64_t seed);

}  // namespace binmask
