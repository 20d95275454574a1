#include "binmask/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "binmask/error.hpp"

namespace binmask {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tie groups, 1-based.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      const int y = labels[order[t]];
      if (y != 0 && y != 1) throw InputError("auc: labels must be 0 or 1");
      if (y == 1) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j + 1;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw InputError("auc: both classes must be present");
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

MeanCi ci95(std::span<const double> values) {
  if (values.size() < 2) throw InputError("ci95: need at least two values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const boost::math::students_t dist(n - 1.0);
  const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
  return {mean, t * sd / std::sqrt(n)};
}

TrialAggregate TrialAggregate::from_values(std::string metric, std::vector<double> values) {
  TrialAggregate agg;
  agg.metric = std::move(metric);
  agg.values = std::move(values);
  if (agg.values.size() >= 2) {
    const auto ci = ci95(agg.values);
    agg.mean = ci.mean;
    agg.ci95_halfwidth = ci.halfwidth;
  } else if (agg.values.size() == 1) {
    agg.mean = agg.values.front();
  }
  return agg;
}

nlohmann::json TrialAggregate::to_json() const {
  nlohmann::json j{{"metric", metric}, {"values", values}, {"mean", mean}};
  j["ci95_halfwidth"] = ci95_halfwidth ? nlohmann::json(*ci95_halfwidth) : nlohmann::json(nullptr);
  return j;
}

}  // namespace binmask
