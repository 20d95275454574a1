#include "binmask/fselect.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "binmask/stats.hpp"

namespace binmask {

namespace {

constexpr std::uint64_t kTrainSeedOffset = 0x9E3779B97F4A7C15ULL;

std::size_t count_at_least(std::span<const double> v, double cutoff) {
  return static_cast<std::size_t>(
      std::count_if(v.begin(), v.end(), [cutoff](double x) { return x >= cutoff; }));
}

TrainConfig classifier_config(const ClassifierSpec& spec, int num_classes, std::uint64_t seed) {
  TrainConfig config = spec.train;
  config.loss = loss_for(num_classes);
  config.seed = seed + kTrainSeedOffset;
  return config;
}

}  // namespace

LossKind loss_for(int num_classes) {
  return num_classes == 2 ? LossKind::SigmoidBCE : LossKind::SoftmaxCrossEntropy;
}

Network build_classifier(const ClassifierSpec& spec, int input_dim, int num_classes, Rng& rng) {
  const int out = num_classes == 2 ? 1 : num_classes;
  if (spec.layers.empty()) {
    return Network(mlp_layers(input_dim, spec.hidden, out, spec.activation, spec.batch_norm,
                              spec.dropout),
                   rng);
  }
  std::vector<LayerSpec> layers;
  int width = input_dim;
  for (auto l : spec.layers) {
    l.in_dim = width;
    if (l.kind != LayerKind::Linear) l.out_dim = width;
    width = l.out_dim;
    layers.push_back(l);
  }
  layers.push_back(LayerSpec::linear(width, out));
  return Network(std::move(layers), rng);
}

MaskHyper selection_mask_defaults() {
  MaskHyper h;
  h.alpha0 = 0.02;
  return h;
}

nlohmann::json SelectionResult::to_json() const {
  auto steps = nlohmann::json::array();
  for (const auto& s : history) {
    steps.push_back({{"lambda", s.lambda},
                     {"strict_count", s.strict_count},
                     {"loose_count", s.loose_count}});
  }
  return {{"selected", selected},   {"lambda_star", lambda_star}, {"cutoff", cutoff},
          {"smoothed", smoothed},   {"converged", converged},     {"search_steps", search_steps},
          {"history", steps}};
}

SearchExhausted::SearchExhausted(std::size_t k, std::vector<SearchStep> history)
    : Error("select_exact_k: no (lambda, cutoff) pair gave exactly " + std::to_string(k) +
            " features within " + std::to_string(history.size()) + " training runs"),
      k_(k),
      history_(std::move(history)) {}

const SearchStep& SearchExhausted::closest() const {
  auto distance = [this](const SearchStep& s) -> std::size_t {
    if (k_ < s.strict_count) return s.strict_count - k_;
    if (k_ > s.loose_count) return k_ - s.loose_count;
    return 0;
  };
  return *std::min_element(history_.begin(), history_.end(),
                           [&](const SearchStep& a, const SearchStep& b) {
                             return distance(a) < distance(b);
                           });
}

std::optional<double> exact_k_cutoff(std::span<const double> smoothed, std::size_t k, double low,
                                     double high) {
  const std::size_t d = smoothed.size();
  if (k < 1 || k > d) throw InputError("exact_k_cutoff: k must be in [1, d]");
  std::vector<double> sorted(smoothed.begin(), smoothed.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double upper = sorted[k - 1];
  const double lower = k < d ? sorted[k] : -std::numeric_limits<double>::infinity();
  if (!(lower < upper)) return std::nullopt;
  const double top = std::min(upper, high);
  if (top < low || !(top > lower)) return std::nullopt;
  const double mid = 0.5 * (std::max(lower, 0.0) + upper);
  return std::min(std::max(mid, low), top);
}

std::vector<std::size_t> threshold_select(std::span<const double> smoothed, double cutoff) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < smoothed.size(); ++i) {
    if (smoothed[i] >= cutoff) out.push_back(i);
  }
  return out;
}

MaskRun train_smoothed_mask(const Dataset& train, const ClassifierSpec& spec, double lambda,
                            std::uint64_t seed, const MaskHyper& hyper) {
  if (!(lambda >= 0.0)) throw InputError("feature selection: lambda must be >= 0");
  const Dataset data = duplicate_to_min_batches(train, spec.train.batch_size, spec.min_batches);
  Rng init(seed);
  Network net = build_classifier(spec, static_cast<int>(data.dims()), data.num_classes, init);
  TrainConfig config = classifier_config(spec, data.num_classes, seed);
  MaskHyper h = hyper;
  h.lambda = lambda;
  config.mask = MaskConfig{MaskSpec::input_features(data.dims()), h};
  config.regularizer = {RegularizerKind::BinMask, lambda};
  config.early_stopping = false;
  config.finetune_epochs = 0;
  auto result = binmask::train(std::move(net), TrainData{&data, nullptr, nullptr}, config);
  return {result.mask->smoothed(), std::move(result.metrics)};
}

SelectionResult select_by_lambda(const Dataset& train, const ClassifierSpec& spec, double lambda,
                                 std::uint64_t seed, const MaskHyper& hyper) {
  SelectionResult r;
  auto run = train_smoothed_mask(train, spec, lambda, seed, hyper);
  r.smoothed = std::move(run.smoothed);
  r.metrics = std::move(run.metrics);
  r.lambda_star = lambda;
  r.cutoff = 0.5;
  r.selected = threshold_select(r.smoothed, r.cutoff);
  r.converged = mask_converged(r.smoothed);
  r.search_steps = 1;
  r.history.push_back({lambda, count_at_least(r.smoothed, 0.8), count_at_least(r.smoothed, 0.2)});
  return r;
}

SelectionResult select_exact_k(std::size_t k, const SmoothedMaskFn& run,
                               const SearchOptions& options) {
  if (k < 1) throw InputError("select_exact_k: k must be >= 1");
  if (!(options.lambda0 > 0.0)) throw InputError("select_exact_k: lambda0 must be positive");
  if (options.budget < 1) throw InputError("select_exact_k: budget must be >= 1");
  double lambda = options.lambda0;
  std::optional<double> too_many_at;  // largest lambda known to keep too many features
  std::optional<double> too_few_at;   // smallest lambda known to keep too few
  std::vector<SearchStep> history;
  for (int step = 1; step <= options.budget; ++step) {
    auto v = run(lambda);
    if (k > v.size()) throw InputError("select_exact_k: k exceeds the number of features");
    const std::size_t strict = count_at_least(v, options.cutoff_high);
    const std::size_t loose = count_at_least(v, options.cutoff_low);
    history.push_back({lambda, strict, loose});
    if (const auto c = exact_k_cutoff(v, k, options.cutoff_low, options.cutoff_high)) {
      SelectionResult r;
      r.selected = threshold_select(v, *c);
      r.lambda_star = lambda;
      r.cutoff = *c;
      r.converged = mask_converged(v);
      r.smoothed = std::move(v);
      r.search_steps = step;
      r.history = std::move(history);
      return r;
    }
    // Without an exact cut, ties straddle the band; the 0.5 count decides.
    const bool too_many = strict > k || (loose >= k && count_at_least(v, 0.5) > k);
    if (too_many) {
      too_many_at = lambda;
      lambda = too_few_at ? std::sqrt(lambda * *too_few_at) : 2.0 * lambda;
    } else {
      too_few_at = lambda;
      lambda = too_many_at ? std::sqrt(lambda * *too_many_at) : 0.5 * lambda;
    }
  }
  throw SearchExhausted(k, std::move(history));
}

SelectionResult select_exact_k(const Dataset& train, const ClassifierSpec& spec, std::size_t k,
                               std::uint64_t seed, const SearchOptions& options,
                               const MaskHyper& hyper) {
  if (k < 1 || k > train.dims()) throw InputError("select_exact_k: k must be in [1, d]");
  std::vector<EpochMetrics> last_metrics;
  auto r = select_exact_k(
      k,
      [&](double lambda) {
        auto run = train_smoothed_mask(train, spec, lambda, seed, hyper);
        last_metrics = std::move(run.metrics);
        return std::move(run.smoothed);
      },
      options);
  r.metrics = std::move(last_metrics);
  return r;
}

RetrainResult retrain_eval(const Dataset& train, const Dataset& test,
                           std::span<const std::size_t> selected, const ClassifierSpec& spec,
                           std::size_t trials, std::uint64_t seed) {
  if (selected.empty()) throw InputError("retrain_eval: empty feature selection");
  if (trials < 1) throw InputError("retrain_eval: trials must be >= 1");
  const Dataset train_cols =
      duplicate_to_min_batches(select_columns(train, selected), spec.train.batch_size,
                               spec.min_batches);
  const Dataset test_cols = select_columns(test, selected);
  RetrainResult r;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng init(seed + t);
    Network net = build_classifier(spec, static_cast<int>(selected.size()), train.num_classes, init);
    TrainConfig config = classifier_config(spec, train.num_classes, seed + t);
    config.mask.reset();
    config.regularizer = {};
    auto result = binmask::train(std::move(net), TrainData{&train_cols, nullptr, nullptr}, config);
    Trainer eval(std::move(result.net), config);
    const auto ev = eval.evaluate(test_cols);
    r.accuracies.push_back(ev.accuracy);
    r.losses.push_back(ev.loss);
  }
  const auto acc = TrialAggregate::from_values("accuracy", r.accuracies);
  r.mean_accuracy = acc.mean;
  r.ci95_halfwidth = acc.ci95_halfwidth;
  r.mean_loss = TrialAggregate::from_values("loss", r.losses).mean;
  return r;
}

std::vector<std::size_t> feature_count_sweep(std::size_t n_selected) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i <= 4; ++i) {
    const std::size_t drop = i * (n_selected / 5);
    if (drop < n_selected) out.push_back(n_selected - drop);
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace binmask
