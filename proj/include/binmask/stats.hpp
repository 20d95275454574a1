#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace binmask {

/// Rank-based (Mann-Whitney) area under the ROC curve; tied scores count 1/2.
/// Throws InputError unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct MeanCi {
  double mean = 0.0;
  double halfwidth = 0.0;
};

/// Mean and Student-t 95% confidence half-width with n - 1 degrees of freedom.
MeanCi ci95(std::span<const double> values);

/// Per-trial values of one metric with their summary.
struct TrialAggregate {
  std::string metric;
  std::vector<double> values;
  double mean = 0.0;
  std::optional<double> ci95_halfwidth;  // empty for a single trial

  static TrialAggregate from_values(std::string metric, std::vector<double> values);
  nlohmann::json to_json() const;
};

}  // namespace binmask
