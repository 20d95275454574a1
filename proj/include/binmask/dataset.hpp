#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "binmask/tensor.hpp"

namespace binmask {

/// Features (N x d) with integer class labels in [0, num_classes).
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  int num_classes = 2;
  std::vector<std::string> feature_names;
  std::vector<std::size_t> informative;  // planted columns of synthetic data

  std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(features.cols()); }
};

Dataset subset_rows(const Dataset& data, std::span<const std::size_t> rows);
/// Keeps the given columns in the given order. Planted indices are remapped
/// and dropped when not kept.
Dataset select_columns(const Dataset& data, std::span<const std::size_t> columns);

/// Parses a comma-separated numeric file. `label_column` may be negative to
/// count from the end (-1 is the last column). Labels must be non-negative
/// integers; num_classes is max label + 1.
Dataset load_csv(const std::filesystem::path& path, int label_column = -1, bool header = false);

struct SplitSpec {
  double test_fraction = 0.2;
  double validation_fraction = 0.0;
  std::uint64_t seed = 0;
};

struct Splits {
  Dataset train;
  Dataset validation;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
  std::vector<std::size_t> test_rows;
};

/// Seeded random partition; test and validation sizes are rounded to the
/// nearest row count.
Splits split_dataset(const Dataset& data, const SplitSpec& spec);

/// Per-column min-max scaling fitted on `train` only and applied to all.
/// Zero-range columns map to 0; values of other datasets are clipped to [0, 1].
void normalize(Dataset& train, std::span<Dataset* const> others = {});

/// Repeats the data whole ceil(min_batches * batch_size / N) times when it
/// yields fewer than `min_batches` full minibatches; otherwise returns a copy.
Dataset duplicate_to_min_batches(const Dataset& data, std::size_t batch_size,
                                 std::size_t min_batches = 30);

/// Binary sidecar, little-endian:
///   char[8] "BMDSET01", u64 rows, u64 cols, u64 num_classes,
///   rows*cols f64 features (row-major), rows i32 labels.
void save_binary(const Dataset& data, const std::filesystem::path& path);
Dataset load_binary(const std::filesystem::path& path);

}  // namespace binmask
