#include "binmask/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <thread>
#include <utility>

#include "binmask/gradcheck.hpp"
#include "binmask/synth.hpp"

namespace binmask {

namespace {

using nlohmann::json;

// Reads the keys of one JSON object, remembering which ones were used so
// that leftovers can be reported.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    const json* v = raw(key);
    if (v == nullptr) return;
    out = convert<T>(*v, field(key));
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    const json* v = raw(key);
    if (v == nullptr || v->is_null()) return;
    out = convert<T>(*v, field(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown field");
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& name) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(name + ": expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(name + ": expected an integer");
      if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() &&
          v.get<long long>() < 0) {
        throw ConfigError(name + ": must be non-negative");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(name + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(name + ": expected a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw ConfigError(name + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], name + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

DatasetSource parse_dataset(const json& j) {
  Fields f(j, "dataset");
  DatasetSource s;
  std::string kind = "planted";
  f.get("kind", kind);
  if (kind == "planted") {
    s.kind = DatasetSource::Kind::Planted;
  } else if (kind == "overfit") {
    s.kind = DatasetSource::Kind::Overfit;
  } else if (kind == "csv") {
    s.kind = DatasetSource::Kind::Csv;
  } else if (kind == "binary") {
    s.kind = DatasetSource::Kind::Binary;
  } else {
    throw ConfigError("dataset.kind: expected planted, overfit, csv or binary, got '" + kind + "'");
  }
  f.get("n", s.n);
  f.get("d", s.d);
  f.get("informative", s.informative);
  f.get("noise", s.noise);
  f.get("classes", s.classes);
  f.get("sparse_rate", s.sparse_rate);
  f.get("seed", s.seed);
  std::string path;
  f.get("path", path);
  s.path = path;
  f.get("label_column", s.label_column);
  f.get("header", s.header);
  f.finish();
  switch (s.kind) {
    case DatasetSource::Kind::Planted:
      require(s.n >= 2, "dataset.n", "must be >= 2");
      require(s.d >= 1, "dataset.d", "must be >= 1");
      require(s.informative >= 1 && s.informative <= s.d, "dataset.informative",
              "must be in [1, d]");
      require(s.noise >= 0.0 && s.noise <= 1.0, "dataset.noise", "must be in [0, 1]");
      require(s.classes >= 2, "dataset.classes", "must be >= 2");
      break;
    case DatasetSource::Kind::Overfit:
      require(s.n >= 2, "dataset.n", "must be >= 2");
      require(s.d >= 1, "dataset.d", "must be >= 1");
      require(s.sparse_rate >= 0.0 && s.sparse_rate < 1.0, "dataset.sparse_rate",
              "must be in [0, 1)");
      break;
    case DatasetSource::Kind::Csv:
    case DatasetSource::Kind::Binary:
      require(!s.path.empty(), "dataset.path", "required for file datasets");
      break;
  }
  return s;
}

LayerSpec parse_layer(const json& j, const std::string& path) {
  Fields f(j, path);
  std::string kind;
  f.get("kind", kind);
  require(!kind.empty(), f.field("kind"), "required");
  LayerSpec l;
  try {
    l.kind = parse_layer_kind(kind);
  } catch (const Error& e) {
    throw ConfigError(f.field("kind") + ": " + e.what());
  }
  f.get("out", l.out_dim);
  f.get("p", l.dropout_p);
  f.get("momentum", l.bn_momentum);
  f.get("eps", l.bn_eps);
  f.finish();
  if (l.kind == LayerKind::Linear) require(l.out_dim >= 1, f.field("out"), "must be >= 1");
  if (l.kind == LayerKind::Dropout) {
    require(l.dropout_p >= 0.0 && l.dropout_p < 1.0, f.field("p"), "must be in [0, 1)");
  }
  return l;
}

void parse_network(const json& j, ClassifierSpec& spec) {
  Fields f(j, "network");
  if (const json* layers = f.raw("layers")) {
    require(layers->is_array(), "network.layers", "expected an array");
    for (std::size_t i = 0; i < layers->size(); ++i) {
      spec.layers.push_back(parse_layer((*layers)[i], "network.layers[" + std::to_string(i) + "]"));
    }
    require(!f.has("hidden") && !f.has("activation") && !f.has("batch_norm") && !f.has("dropout"),
            "network", "give either layers or hidden/activation/batch_norm/dropout");
  }
  f.get("hidden", spec.hidden);
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    require(spec.hidden[i] >= 1, "network.hidden[" + std::to_string(i) + "]", "must be >= 1");
  }
  std::string activation = to_string(spec.activation);
  f.get("activation", activation);
  if (activation == "tanh") {
    spec.activation = LayerKind::Tanh;
  } else if (activation == "relu") {
    spec.activation = LayerKind::ReLU;
  } else {
    throw ConfigError("network.activation: expected tanh or relu, got '" + activation + "'");
  }
  f.get("batch_norm", spec.batch_norm);
  f.get("dropout", spec.dropout);
  require(spec.dropout >= 0.0 && spec.dropout < 1.0, "network.dropout", "must be in [0, 1)");
  f.finish();
}

void parse_train(const json& j, ClassifierSpec& spec) {
  Fields f(j, "train");
  TrainConfig& t = spec.train;
  f.get("epochs", t.epochs);
  f.get("batch_size", t.batch_size);
  f.get("lr_start", t.lr_start);
  f.get("lr_end", t.lr_end);
  f.get("momentum", t.momentum);
  f.get("weight_decay", t.weight_decay);
  std::string optimizer = t.optimizer == OptimizerKind::AdamW ? "adamw" : "sgd";
  f.get("optimizer", optimizer);
  if (optimizer == "sgd") {
    t.optimizer = OptimizerKind::SgdMomentum;
  } else if (optimizer == "adamw") {
    t.optimizer = OptimizerKind::AdamW;
  } else {
    throw ConfigError("train.optimizer: expected sgd or adamw, got '" + optimizer + "'");
  }
  f.get("early_stopping", t.early_stopping);
  f.get("finetune_epochs", t.finetune_epochs);
  f.get("min_batches", spec.min_batches);
  f.finish();
  require(t.epochs >= 1, "train.epochs", "must be >= 1");
  require(t.batch_size >= 1, "train.batch_size", "must be >= 1");
  require(t.lr_start > 0.0, "train.lr_start", "must be positive");
  require(t.lr_end > 0.0, "train.lr_end", "must be positive");
  require(t.momentum >= 0.0 && t.momentum < 1.0, "train.momentum", "must be in [0, 1)");
  require(t.weight_decay >= 0.0, "train.weight_decay", "must be >= 0");
  require(t.finetune_epochs >= 0, "train.finetune_epochs", "must be >= 0");
}

void parse_mask(const json& j, MaskHyper& h, bool& inputs) {
  Fields f(j, "mask");
  f.get("alpha0", h.alpha0);
  f.get("alpha1", h.alpha1);
  f.get("gamma", h.gamma);
  f.get("eta0", h.eta0);
  f.get("eta1", h.eta1);
  f.get("warmup_fraction", h.warmup_fraction);
  std::string target = inputs ? "inputs" : "weights";
  f.get("target", target);
  if (target == "inputs") {
    inputs = true;
  } else if (target == "weights") {
    inputs = false;
  } else {
    throw ConfigError("mask.target: expected inputs or weights, got '" + target + "'");
  }
  f.finish();
  require(h.alpha1 > 0.0, "mask.alpha1", "must be positive");
  require(std::abs(h.alpha0) <= h.alpha1, "mask.alpha0", "must lie in [-alpha1, alpha1]");
  require(h.gamma >= 0.0 && h.gamma < 1.0, "mask.gamma", "must be in [0, 1)");
  require(h.eta0 > 0.0, "mask.eta0", "must be positive");
  require(h.eta1 > 0.0, "mask.eta1", "must be positive");
  require(h.warmup_fraction >= 0.0 && h.warmup_fraction <= 1.0, "mask.warmup_fraction",
          "must be in [0, 1]");
}

std::vector<MethodGrid> parse_methods(const json& j) {
  require(j.is_array(), "methods", "expected an array");
  std::vector<MethodGrid> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "methods[" + std::to_string(i) + "]";
    Fields f(j[i], path);
    std::string kind;
    f.get("kind", kind);
    MethodGrid g;
    try {
      g.kind = parse_regularizer(kind);
    } catch (const Error& e) {
      throw ConfigError(f.field("kind") + ": " + e.what());
    }
    require(g.kind != RegularizerKind::None, f.field("kind"),
            "the unregularized baseline is always included");
    f.get("values", g.values);
    f.finish();
    require(!g.values.empty(), f.field("values"), "must not be empty");
    for (double v : g.values) {
      require(v >= 0.0, f.field("values"), "must be >= 0");
      if (g.kind == RegularizerKind::Dropout) require(v < 1.0, f.field("values"), "must be < 1");
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string run_name(RegularizerKind kind, double value) {
  if (kind == RegularizerKind::None) return "none";
  return to_string(kind) + "_" + format_value(value);
}

std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
  std::string out = metrics_csv_header() + "\n";
  for (const auto& m : rows) out += metrics_csv_row(m) + "\n";
  return out;
}

struct TrialOutput {
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::pair<std::string, double>> metrics;
  std::optional<json> selection;
  std::optional<std::string> error;
  json detail;
};

struct TrialSeeds {
  std::uint64_t split;
  std::uint64_t init;
};

TrialSeeds seeds_for(std::uint64_t base, std::size_t trial) {
  return {base + trial, base + 10000 + trial};
}

TrainConfig trial_train_config(const ClassifierSpec& spec, int classes, std::uint64_t seed) {
  TrainConfig tc = spec.train;
  tc.loss = loss_for(classes);
  tc.seed = seed;
  return tc;
}

// Evaluates the network and mask that a training run returned.
EvalResult evaluate_result(const TrainResult& r, const TrainConfig& tc, const Dataset& data) {
  TrainConfig eval_config = tc;
  eval_config.early_stopping = false;
  Trainer ev(r.net, eval_config);
  ev.mask() = r.mask;
  return ev.evaluate(data);
}

struct PreparedSplit {
  Dataset train;  // normalized, not duplicated
  Dataset validation;
  Dataset test;
};

PreparedSplit prepare(const Dataset& data, const ExperimentConfig& c, std::uint64_t seed) {
  Splits s = split_dataset(data, {c.test_fraction, c.validation_fraction, seed});
  std::vector<Dataset*> others{&s.test};
  if (s.validation.rows() > 0) others.push_back(&s.validation);
  normalize(s.train, others);
  return {std::move(s.train), std::move(s.validation), std::move(s.test)};
}

TrialOutput run_sparsify_trial(const Dataset& data, const ExperimentConfig& c, std::size_t trial) {
  const auto seeds = seeds_for(c.seed, trial);
  PreparedSplit p = prepare(data, c, seeds.split);
  const Dataset train_set =
      duplicate_to_min_batches(p.train, c.classifier.train.batch_size, c.classifier.min_batches);
  Rng init(seeds.init);
  Network net = build_classifier(c.classifier, static_cast<int>(data.dims()), data.num_classes, init);
  TrainConfig tc = trial_train_config(c.classifier, data.num_classes, seeds.init);
  const double lambda = c.lambda.value_or(0.0);
  MaskSpec spec = c.mask_inputs ? MaskSpec::input_features(data.dims()) : MaskSpec::all_weights(net);
  tc.mask = MaskConfig{spec, c.mask};
  tc.regularizer = {RegularizerKind::BinMask, lambda};
  const Dataset* val = p.validation.rows() > 0 ? &p.validation : nullptr;
  TrainResult r = train(std::move(net), TrainData{&train_set, &p.test, val}, tc);

  TrialOutput out;
  out.files.emplace_back("trial_" + std::to_string(trial) + ".csv", metrics_csv(r.metrics));
  const auto ev = evaluate_result(r, tc, p.test);
  const auto norms = weight_norm_report(r.net, &spec, r.mask->bits());
  out.metrics = {{"test_accuracy", ev.accuracy},
                 {"test_loss", ev.loss},
                 {"train_loss", r.metrics.back().train_loss},
                 {"sparsity", r.mask->sparsity()},
                 {"mean_weight_l0", norms.mean_l0}};
  if (ev.auc) out.metrics.emplace_back("test_auc", *ev.auc);
  out.detail = {{"selected_epoch", r.selected_epoch}};
  return out;
}

TrialOutput run_select_trial(const Dataset& data, const ExperimentConfig& c, std::size_t trial) {
  const auto seeds = seeds_for(c.seed, trial);
  PreparedSplit p = prepare(data, c, seeds.split);
  TrialOutput out;
  SelectionResult sel;
  try {
    sel = c.k ? select_exact_k(p.train, c.classifier, *c.k, seeds.init, c.search, c.mask)
              : select_by_lambda(p.train, c.classifier, c.lambda.value_or(1e-3), seeds.init, c.mask);
  } catch (const SearchExhausted& e) {
    const auto& best = e.closest();
    out.error = e.what();
    out.detail = {{"closest", {{"lambda", best.lambda},
                               {"strict_count", best.strict_count},
                               {"loose_count", best.loose_count}}},
                  {"search_steps", e.history().size()}};
    return out;
  }
  out.files.emplace_back("trial_" + std::to_string(trial) + ".csv", metrics_csv(sel.metrics));
  json sj = sel.to_json();
  sj["trial"] = trial;
  if (!data.feature_names.empty()) {
    std::vector<std::string> names;
    for (auto i : sel.selected) names.push_back(data.feature_names[i]);
    sj["selected_names"] = names;
  }
  out.selection = sj;
  out.metrics = {{"selected_count", static_cast<double>(sel.selected.size())},
                 {"search_steps", static_cast<double>(sel.search_steps)},
                 {"lambda_star", sel.lambda_star},
                 {"converged", sel.converged ? 1.0 : 0.0}};
  if (!data.informative.empty()) {
    std::size_t hits = 0;
    for (auto i : data.informative) {
      hits += std::binary_search(sel.selected.begin(), sel.selected.end(), i) ? 1 : 0;
    }
    out.metrics.emplace_back("recall", static_cast<double>(hits) /
                                           static_cast<double>(data.informative.size()));
  }
  if (sel.selected.empty()) {
    out.error = "no features selected";
    return out;
  }
  const auto rt = retrain_eval(p.train, p.test, sel.selected, c.classifier, c.retrain_trials,
                               seeds.init);
  out.metrics.emplace_back("retrained_accuracy", rt.mean_accuracy);
  out.metrics.emplace_back("retrained_loss", rt.mean_loss);
  if (c.baseline) {
    std::vector<std::size_t> all(data.dims());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto full = retrain_eval(p.train, p.test, all, c.classifier, c.retrain_trials, seeds.init);
    out.metrics.emplace_back("baseline_accuracy", full.mean_accuracy);
    out.metrics.emplace_back("baseline_loss", full.mean_loss);
  }
  return out;
}

TrialOutput run_compare_trial(const Dataset& data, const ExperimentConfig& c, std::size_t trial) {
  const auto seeds = seeds_for(c.seed, trial);
  PreparedSplit p = prepare(data, c, seeds.split);
  const Dataset train_set =
      duplicate_to_min_batches(p.train, c.classifier.train.batch_size, c.classifier.min_batches);
  const Dataset* val = p.validation.rows() > 0 ? &p.validation : nullptr;

  std::vector<std::pair<RegularizerKind, double>> runs{{RegularizerKind::None, 0.0}};
  for (const auto& g : c.methods) {
    for (double v : g.values) runs.emplace_back(g.kind, v);
  }

  TrialOutput out;
  auto record = [&](const std::string& name, const TrainResult& r, const TrainConfig& tc,
                    const MaskSpec* spec) {
    out.files.emplace_back("trial_" + std::to_string(trial) + "_" + name + ".csv",
                           metrics_csv(r.metrics));
    const auto test = evaluate_result(r, tc, p.test);
    const auto fit = evaluate_result(r, tc, p.train);
    const std::span<const std::uint8_t> bits =
        r.mask ? std::span<const std::uint8_t>(r.mask->bits()) : std::span<const std::uint8_t>{};
    const auto norms = weight_norm_report(r.net, spec, bits);
    if (test.auc) out.metrics.emplace_back(name + ".test_auc", *test.auc);
    if (fit.auc) out.metrics.emplace_back(name + ".train_auc", *fit.auc);
    if (val) {
      const auto v = evaluate_result(r, tc, *val);
      if (v.auc) out.metrics.emplace_back(name + ".val_auc", *v.auc);
    }
    out.metrics.emplace_back(name + ".mean_weight_l0", norms.mean_l0);
    out.metrics.emplace_back(name + ".mean_weight_l1", norms.mean_l1);
    out.metrics.emplace_back(name + ".mean_weight_l2", norms.mean_l2);
    out.metrics.emplace_back(name + ".selected_epoch", static_cast<double>(r.selected_epoch));
  };

  for (const auto& [kind, value] : runs) {
    ClassifierSpec cs = c.classifier;
    if (kind == RegularizerKind::Dropout) {
      cs.dropout = value;
      for (auto& l : cs.layers) {
        if (l.kind == LayerKind::Dropout) l.dropout_p = value;
      }
    }
    Rng init(seeds.init);
    Network net = build_classifier(cs, static_cast<int>(data.dims()), data.num_classes, init);
    TrainConfig tc = trial_train_config(cs, data.num_classes, seeds.init);
    tc.regularizer = {kind, value};
    if (kind == RegularizerKind::None) tc.weight_decay = 0.0;
    std::optional<MaskSpec> spec;
    if (kind == RegularizerKind::BinMask) {
      spec = MaskSpec::all_weights(net);
      tc.mask = MaskConfig{*spec, c.mask};
    }
    TrainResult r = train(std::move(net), TrainData{&train_set, &p.test, val}, tc);
    record(run_name(kind, value), r, tc, spec ? &*spec : nullptr);
  }

  if (c.logistic_regression) {
    ClassifierSpec lr = c.classifier;
    lr.layers.clear();
    lr.hidden.clear();
    lr.batch_norm = false;
    lr.dropout = 0.0;
    Rng init(seeds.init);
    Network net = build_classifier(lr, static_cast<int>(data.dims()), data.num_classes, init);
    TrainConfig tc = trial_train_config(lr, data.num_classes, seeds.init);
    TrainResult r = train(std::move(net), TrainData{&train_set, &p.test, val}, tc);
    record("logistic", r, tc, nullptr);
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
  if (!f) throw InputError("failed writing " + path.string());
}

ExperimentReport run_gradcheck_task(const ExperimentConfig& c, const RunOptions& options) {
  const auto r = run_gradcheck_suite(c.gradcheck.nets, c.seed, c.gradcheck.max_width,
                                     c.gradcheck.max_depth);
  ExperimentReport report;
  report.partial = r.failed_nets > 0;
  report.summary = {{"task", to_string(c.task)},
                    {"seed", c.seed},
                    {"nets", r.nets},
                    {"failed_nets", r.failed_nets},
                    {"max_rel_error", r.max_rel_error},
                    {"seconds", r.seconds},
                    {"partial", report.partial}};
  std::filesystem::create_directories(options.out);
  write_file(options.out / "summary.json", report.summary.dump(2) + "\n");
  report.written.push_back("summary.json");
  return report;
}

}  // namespace

std::string to_string(Task task) {
  switch (task) {
    case Task::Sparsify:
      return "sparsify";
    case Task::SelectFeatures:
      return "select-features";
    case Task::RegularizeCompare:
      return "regularize-compare";
    case Task::GradCheck:
      return "gradcheck";
  }
  return "?";
}

Task parse_task(const std::string& name) {
  for (Task t : {Task::Sparsify, Task::SelectFeatures, Task::RegularizeCompare, Task::GradCheck}) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("task: unknown task '" + name + "'");
}

Dataset load_source(const DatasetSource& s, std::uint64_t fallback_seed) {
  const std::uint64_t seed = s.seed.value_or(fallback_seed);
  switch (s.kind) {
    case DatasetSource::Kind::Planted:
      return synth_planted_features(s.n, s.d, s.informative, s.noise, seed, s.classes);
    case DatasetSource::Kind::Overfit:
      return synth_overfit_prone(s.n, s.d, s.sparse_rate, seed);
    case DatasetSource::Kind::Csv:
      return load_csv(s.path, s.label_column, s.header);
    case DatasetSource::Kind::Binary:
      return load_binary(s.path);
  }
  throw ConfigError("dataset.kind: unsupported");
}

ExperimentConfig parse_config(const nlohmann::json& j, Task task) {
  Fields f(j, "");
  ExperimentConfig c;
  c.task = task;
  if (const json* t = f.raw("task")) {
    const auto name = Fields::convert<std::string>(*t, "task");
    if (parse_task(name) != task) {
      throw ConfigError("task: config is for '" + name + "' but '" + to_string(task) +
                        "' was requested");
    }
  }
  // Task-specific protocol defaults.
  switch (task) {
    case Task::Sparsify:
      c.trials = 4;
      break;
    case Task::SelectFeatures:
      c.trials = 8;
      c.mask = selection_mask_defaults();
      c.mask_inputs = true;
      break;
    case Task::RegularizeCompare: {
      c.trials = 8;
      c.test_fraction = 0.15;
      c.validation_fraction = 0.10;
      TrainConfig& t = c.classifier.train;
      t.optimizer = OptimizerKind::AdamW;
      t.epochs = 16;
      t.lr_start = 0.002;
      t.lr_end = 5e-5;
      t.weight_decay = 0.01;
      t.early_stopping = true;
      break;
    }
    case Task::GradCheck:
      c.trials = 1;
      break;
  }
  f.get("seed", c.seed);
  f.get("trials", c.trials);
  require(c.trials >= 1, "trials", "must be >= 1");
  if (const json* d = f.raw("dataset")) c.dataset = parse_dataset(*d);
  if (const json* s = f.raw("split")) {
    Fields sf(*s, "split");
    sf.get("test", c.test_fraction);
    sf.get("validation", c.validation_fraction);
    sf.finish();
  }
  require(c.test_fraction > 0.0 && c.test_fraction < 1.0, "split.test", "must be in (0, 1)");
  require(c.validation_fraction >= 0.0 && c.test_fraction + c.validation_fraction < 1.0,
          "split.validation", "must be >= 0 and leave training rows");
  if (const json* n = f.raw("network")) parse_network(*n, c.classifier);
  if (const json* t = f.raw("train")) parse_train(*t, c.classifier);
  if (const json* m = f.raw("mask")) parse_mask(*m, c.mask, c.mask_inputs);
  f.get("lambda", c.lambda);
  if (c.lambda) require(*c.lambda >= 0.0, "lambda", "must be >= 0");
  f.get("k", c.k);
  if (c.k) {
    require(task == Task::SelectFeatures, "k", "only applies to select-features");
    require(*c.k >= 1, "k", "must be >= 1");
    require(!c.lambda, "k", "give either k or lambda, not both");
  }
  if (const json* s = f.raw("search")) {
    Fields sf(*s, "search");
    sf.get("lambda0", c.search.lambda0);
    sf.get("budget", c.search.budget);
    sf.finish();
    require(c.search.lambda0 > 0.0, "search.lambda0", "must be positive");
    require(c.search.budget >= 1, "search.budget", "must be >= 1");
  }
  f.get("retrain_trials", c.retrain_trials);
  require(c.retrain_trials >= 1, "retrain_trials", "must be >= 1");
  f.get("baseline", c.baseline);
  if (const json* m = f.raw("methods")) {
    require(task == Task::RegularizeCompare, "methods", "only applies to regularize-compare");
    c.methods = parse_methods(*m);
  }
  f.get("logistic_regression", c.logistic_regression);
  if (const json* g = f.raw("gradcheck")) {
    Fields gf(*g, "gradcheck");
    gf.get("nets", c.gradcheck.nets);
    gf.get("max_width", c.gradcheck.max_width);
    gf.get("max_depth", c.gradcheck.max_depth);
    gf.finish();
    require(c.gradcheck.nets >= 1, "gradcheck.nets", "must be >= 1");
    require(c.gradcheck.max_width >= 1, "gradcheck.max_width", "must be >= 1");
    require(c.gradcheck.max_depth >= 1, "gradcheck.max_depth", "must be >= 1");
  }
  f.finish();
  if (task == Task::RegularizeCompare) {
    require(c.validation_fraction > 0.0 || !c.classifier.train.early_stopping, "split.validation",
            "early stopping needs a validation split");
    for (const auto& g : c.methods) {
      if (g.kind == RegularizerKind::Dropout && !c.classifier.layers.empty()) {
        const bool any = std::any_of(c.classifier.layers.begin(), c.classifier.layers.end(),
                                     [](const LayerSpec& l) { return l.kind == LayerKind::Dropout; });
        require(any, "methods", "dropout needs a dropout layer in network.layers");
      }
    }
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, Task task) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, task);
}

ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  ExperimentConfig c = config;
  if (options.seed) c.seed = *options.seed;
  if (c.task == Task::GradCheck) return run_gradcheck_task(c, options);

  const Dataset data = load_source(c.dataset, c.seed);
  std::vector<TrialOutput> outputs(c.trials);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < c.trials;) {
      try {
        switch (c.task) {
          case Task::Sparsify:
            outputs[i] = run_sparsify_trial(data, c, i);
            break;
          case Task::SelectFeatures:
            outputs[i] = run_select_trial(data, c, i);
            break;
          case Task::RegularizeCompare:
            outputs[i] = run_compare_trial(data, c, i);
            break;
          case Task::GradCheck:
            break;
        }
      } catch (const std::exception& e) {
        outputs[i] = TrialOutput{};
        outputs[i].error = e.what();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.jobs, 1, c.trials);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ExperimentReport report;
  std::filesystem::create_directories(options.out);
  std::map<std::string, std::vector<double>> values;
  std::vector<std::string> order;
  json failed = json::array();
  json trials = json::array();
  json selection = json::array();
  for (std::size_t i = 0; i < c.trials; ++i) {
    auto& o = outputs[i];
    for (const auto& [name, text] : o.files) {
      write_file(options.out / name, text);
      report.written.push_back(name);
    }
    if (o.selection) selection.push_back(*o.selection);
    json t{{"trial", i}, {"split_seed", seeds_for(c.seed, i).split},
           {"init_seed", seeds_for(c.seed, i).init}};
    if (!o.detail.is_null()) t["detail"] = o.detail;
    if (o.error) {
      report.partial = true;
      json fj{{"trial", i}, {"error", *o.error}};
      if (!o.detail.is_null()) fj["detail"] = o.detail;
      failed.push_back(fj);
      t["error"] = *o.error;
      trials.push_back(t);
      continue;
    }
    json m = json::object();
    for (const auto& [name, v] : o.metrics) {
      if (!values.count(name)) order.push_back(name);
      values[name].push_back(v);
      m[name] = v;
    }
    t["metrics"] = m;
    trials.push_back(t);
  }

  json metrics = json::object();
  for (const auto& name : order) {
    metrics[name] = TrialAggregate::from_values(name, values[name]).to_json();
  }
  report.summary = {{"task", to_string(c.task)}, {"seed", c.seed},       {"trials", c.trials},
                    {"partial", report.partial}, {"failed_trials", failed}, {"metrics", metrics},
                    {"per_trial", trials}};

  if (c.task == Task::RegularizeCompare) {
    // Best value per method by mean validation AUC.
    json best = json::object();
    for (const auto& g : c.methods) {
      std::optional<double> best_value;
      double best_val = -1.0;
      for (double v : g.values) {
        const auto key = run_name(g.kind, v) + ".val_auc";
        if (!values.count(key)) continue;
        const double mean = TrialAggregate::from_values(key, values[key]).mean;
        if (mean > best_val) {
          best_val = mean;
          best_value = v;
        }
      }
      if (!best_value) continue;
      const auto name = run_name(g.kind, *best_value);
      json b{{"value", *best_value}, {"run", name}, {"mean_val_auc", best_val}};
      if (metrics.contains(name + ".test_auc")) b["test_auc"] = metrics[name + ".test_auc"];
      best[to_string(g.kind)] = b;
    }
    report.summary["best"] = best;
  }

  if (c.task == Task::SelectFeatures) {
    report.selection = json{{"k", c.k ? json(*c.k) : json(nullptr)},
                            {"lambda", c.lambda ? json(*c.lambda) : json(nullptr)},
                            {"trials", selection}};
    report.summary["selection"] = selection;
    write_file(options.out / "selection.json", report.selection->dump(2) + "\n");
    report.written.push_back("selection.json");
  }
  write_file(options.out / "summary.json", report.summary.dump(2) + "\n");
  report.written.push_back("summary.json");
  return report;
}

}  // namespace binmask
