#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "binmask/fselect.hpp"
#include "binmask/stats.hpp"

namespace binmask {

enum class Task { Sparsify, SelectFeatures, RegularizeCompare, GradCheck };

std::string to_string(Task task);
Task parse_task(const std::string& name);

struct DatasetSource {
  enum class Kind { Planted, Overfit, Csv, Binary };
  Kind kind = Kind::Planted;
  std::size_t n = 2000;
  std::size_t d = 20;
  std::size_t informative = 5;
  double noise = 0.0;
  int classes = 2;
  double sparse_rate = 0.9;
  std::optional<std::uint64_t> seed;  // defaults to the experiment seed
  std::filesystem::path path;
  int label_column = -1;
  bool header = false;
};

/// Dataset described by `source`; synthetic sources use `fallback_seed`
/// unless they carry their own.
Dataset load_source(const DatasetSource& source, std::uint64_t fallback_seed);

struct MethodGrid {
  RegularizerKind kind = RegularizerKind::None;
  std::vector<double> values;
};

struct GradCheckConfig {
  std::size_t nets = 50;
  int max_width = 16;
  int max_depth = 3;
};

struct ExperimentConfig {
  Task task = Task::Sparsify;
  std::uint64_t seed = 0;
  std::size_t trials = 4;
  DatasetSource dataset;
  double test_fraction = 0.2;
  double validation_fraction = 0.0;
  ClassifierSpec classifier;
  MaskHyper mask;
  bool mask_inputs = false;  // sparsify: mask input features instead of weights
  std::optional<double> lambda;
  std::optional<std::size_t> k;
  SearchOptions search;
  std::size_t retrain_trials = 1;
  bool baseline = false;  // select-features: also retrain on all features
  std::vector<MethodGrid> methods;
  bool logistic_regression = true;
  GradCheckConfig gradcheck;
};

/// Parses and validates a config for `task`. Unknown keys, wrong types and
/// out-of-range values raise ConfigError naming the field.
ExperimentConfig parse_config(const nlohmann::json& j, Task task);
ExperimentConfig load_config(const std::filesystem::path& path, Task task);

struct RunOptions {
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "out";
};

struct ExperimentReport {
  nlohmann::json summary;
  std::optional<nlohmann::json> selection;
  std::vector<std::string> written;  // file names under RunOptions::out
  bool partial = false;
};

/// Runs every trial (trial i splits with seed + i and initializes with
/// seed + 10000 + i), then writes trial CSVs, summary.json and, for feature
/// selection, selection.json. Failed trials are recorded and mark the
/// summary partial.
ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options);

}  // namespace binmask
