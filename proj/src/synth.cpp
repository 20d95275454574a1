#include "binmask/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binmask/error.hpp"

namespace binmask {

namespace {

std::vector<std::size_t> pick_columns(std::size_t d, std::size_t count, Rng& rng) {
  std::vector<std::size_t> all(d);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

PlantedFunction::PlantedFunction(std::size_t dims, std::vector<std::size_t> informative,
                                 int num_classes, Rng& rng, int hidden)
    : dims_(dims), informative_(std::move(informative)), num_classes_(num_classes) {
  if (num_classes < 2) throw ConfigError("PlantedFunction: need at least two classes");
  for (auto c : informative_) {
    if (c >= dims_) throw ConfigError("PlantedFunction: informative column out of range");
  }
  const auto k = static_cast<Eigen::Index>(informative_.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  first_.resize(hidden, k);
  for (Eigen::Index i = 0; i < first_.size(); ++i) first_.data()[i] = normal(rng);
  // Equal column norms so that every planted feature carries comparable signal.
  for (Eigen::Index j = 0; j < k; ++j) {
    const double norm = first_.col(j).norm();
    if (norm > 0.0) first_.col(j) *= 8.0 / (norm * std::sqrt(static_cast<double>(k)));
  }
  bias_ = Vector::NullaryExpr(hidden, [&] { return 0.5 * normal(rng); });
  const int outputs = num_classes == 2 ? 1 : num_classes;
  second_.resize(outputs, hidden);
  for (Eigen::Index i = 0; i < second_.size(); ++i) second_.data()[i] = normal(rng);
}

Vector PlantedFunction::scores(std::span<const double> row) const {
  if (row.size() != dims_) throw InputError("PlantedFunction: row has the wrong width");
  Vector x(static_cast<Eigen::Index>(informative_.size()));
  for (std::size_t j = 0; j < informative_.size(); ++j) {
    x(static_cast<Eigen::Index>(j)) = row[informative_[j]] - 0.5;
  }
  const Vector h = (first_ * x + bias_).array().tanh().matrix();
  return second_ * h;
}

int PlantedFunction::classify(std::span<const double> row) const {
  const Vector s = scores(row);
  if (num_classes_ == 2) return s(0) > threshold_ ? 1 : 0;
  Eigen::Index arg = 0;
  s.maxCoeff(&arg);
  return static_cast<int>(arg);
}

PlantedData synth_planted(std::size_t n, std::size_t d, std::size_t informative, double noise,
                          std::uint64_t seed, int num_classes) {
  if (informative > d) throw InputError("synth_planted_features: more informative columns than d");
  if (n == 0 || d == 0) throw InputError("synth_planted_features: n and d must be positive");
  if (!(noise >= 0.0 && noise <= 1.0)) throw InputError("synth_planted_features: noise in [0, 1]");
  Rng rng(seed);
  auto columns = pick_columns(d, informative, rng);
  PlantedFunction rule(d, columns, num_classes, rng);

  Dataset data;
  data.num_classes = num_classes;
  data.informative = columns;
  data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < data.features.size(); ++i) data.features.data()[i] = unit(rng);

  auto row = [&](std::size_t r) {
    return std::span<const double>(data.features.row(static_cast<Eigen::Index>(r)).data(), d);
  };
  if (informative > 0 && num_classes == 2) {
    std::vector<double> s(n);
    for (std::size_t r = 0; r < n; ++r) s[r] = rule.scores(row(r))(0);
    std::nth_element(s.begin(), s.begin() + static_cast<long>(n / 2), s.end());
    rule.set_threshold(s[n / 2]);
  }
  std::uniform_int_distribution<int> any_class(0, num_classes - 1);
  data.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    int y = informative > 0 ? rule.classify(row(r)) : any_class(rng);
    if (noise > 0.0 && unit(rng) < noise) y = any_class(rng);
    data.labels[r] = y;
  }
  return {std::move(data), std::move(rule)};
}

Dataset synth_planted_features(std::size_t n, std::size_t d, std::size_t informative, double noise,
                               std::uint64_t seed, int num_classes) {
  return synth_planted(n, d, informative, noise, seed, num_classes).data;
}

Dataset synth_overfit_prone(std::size_t n, std::size_t d, double sparse_rate, std::uint64_t seed) {
  if (!(sparse_rate >= 0.0 && sparse_rate <= 1.0)) {
    throw InputError("synth_overfit_prone: sparse_rate must be in [0, 1]");
  }
  if (n == 0 || d < 2) throw InputError("synth_overfit_prone: need n >= 1 and d >= 2");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Dataset data;
  data.num_classes = 2;
  data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < data.features.size(); ++i) {
    data.features.data()[i] = unit(rng) < sparse_rate ? 0.0 : 1.0;
  }

  const std::size_t relevant = std::min<std::size_t>(12, d);
  data.informative = pick_columns(d, relevant, rng);
  std::vector<double> coef(relevant);
  for (auto& c : coef) c = (unit(rng) < 0.5 ? -1.0 : 1.0) * (1.5 + 1.5 * unit(rng));
  struct Pair {
    std::size_t a, b;
    double weight;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i + 1 < relevant; i += 2) {
    pairs.push_back({data.informative[i], data.informative[i + 1],
                     (unit(rng) < 0.5 ? -1.0 : 1.0) * 3.0});
  }
  data.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto x = data.features.row(static_cast<Eigen::Index>(r));
    double logit = -1.0;
    for (std::size_t j = 0; j < relevant; ++j) {
      logit += coef[j] * x(static_cast<Eigen::Index>(data.informative[j]));
    }
    for (const auto& p : pairs) {
      logit += p.weight * x(static_cast<Eigen::Index>(p.a)) * x(static_cast<Eigen::Index>(p.b));
    }
    data.labels[r] = unit(rng) < 1.0 / (1.0 + std::exp(-logit)) ? 1 : 0;
  }
  return data;
}

}  // namespace binmask
