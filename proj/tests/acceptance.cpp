// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "binmask/experiment.hpp"
#include "binmask/fselect.hpp"
#include "binmask/gradcheck.hpp"
#include "binmask/stats.hpp"
#include "binmask/synth.hpp"
#include "binmask/train.hpp"

using namespace binmask;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct Prepared {
  Dataset train;
  Dataset test;
};

Prepared prepare(const Dataset& data, double test_fraction, std::uint64_t seed) {
  Splits s = split_dataset(data, {test_fraction, 0.0, seed});
  Dataset* others[] = {&s.test};
  normalize(s.train, others);
  return {std::move(s.train), std::move(s.test)};
}

std::vector<std::size_t> iota_cols(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// ---------------------------------------------------------------------------
// 1

Outcome gradient_correctness() {
  const auto r = run_gradcheck_suite(50, 2024, 16, 3);
  return {r.failed_nets == 0 && r.seconds < 60.0,
          fmt("%zu nets, %zu failed, max rel err %.2e, %.1f s", r.nets, r.failed_nets,
              r.max_rel_error, r.seconds)};
}

// ---------------------------------------------------------------------------
// 2

Outcome ste_quantizer_suite() {
  std::vector<std::string> failures;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  check(quantize(std::vector<double>{0.3, -0.1, 0.0}) == BinaryMask{1, 0, 1}, "quantize tie");
  check(quantize(std::vector<double>{-0.0}) == BinaryMask{1}, "negative zero");
  check(quantize(std::vector<double>{-1e-300, -2.0}) == BinaryMask{0, 0}, "all negative");

  Rng rng(7);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::vector<double> g(64);
  for (auto& x : g) x = normal(rng);
  check(ste_backward(g) == g, "ste identity");

  // Clip bound after every update, with gradients large enough to push past it.
  MaskHyper h;
  h.lambda = 1e-2;
  MaskState s(64, h);
  bool clipped = true;
  for (int step = 0; step < 500; ++step) {
    for (auto& x : g) x = normal(rng);
    s.mask_update(g, 0.05);
    for (double v : s.latent()) clipped = clipped && std::abs(v) <= h.alpha1;
    clipped = clipped && s.bits() == quantize(s.latent());
  }
  check(clipped, "clip bound");

  // Warmup freeze for E in {10, 100}.
  for (int epochs : {10, 100}) {
    const int warm = warmup_epochs(epochs, 0.1);
    check(warm == static_cast<int>(std::lround(0.1 * epochs)), fmt("E_b' for E=%d", epochs));
    Rng init(1);
    Network net(mlp_layers(3, {4}, 1), init);
    TrainConfig c;
    c.epochs = epochs;
    c.loss = LossKind::SigmoidBCE;
    c.mask = MaskConfig{MaskSpec::all_weights(net), h};
    c.regularizer = {RegularizerKind::BinMask, 10.0};
    Trainer t(std::move(net), c);
    Matrix x = Matrix::Random(8, 3);
    const std::vector<int> y{0, 1, 0, 1, 1, 0, 1, 0};
    const auto initial = t.mask()->latent();
    for (int e = 0; e < warm; ++e) {
      t.begin_epoch(e);
      t.train_step(x, y);
    }
    check(t.mask()->latent() == initial && t.mask()->active() == t.mask()->size(),
          fmt("frozen during warmup, E=%d", epochs));
    t.begin_epoch(warm);
    check(!t.mask()->frozen(), fmt("trainable at epoch E_b', E=%d", epochs));
    t.train_step(x, y);
    check(t.mask()->latent() != initial, fmt("updates after warmup, E=%d", epochs));
  }
  std::string detail = failures.empty() ? "quantizer, STE, clip, warmup E=10/100 ok" : "failed:";
  for (const auto& f : failures) detail += " [" + f + "]";
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// 3

Outcome penalty_alone() {
  MaskHyper h;
  h.lambda = 1e-3;
  const double eta = 1e-3;
  const double eps = 0.01;
  const int bound = static_cast<int>(std::ceil(h.alpha0 / eta * (1.0 + eps)));
  MaskState s(100, h);
  const std::vector<double> zero(100, 0.0);
  int steps = 0;
  while (s.active() > 0 && steps < 10 * bound) {
    s.mask_update(zero, eta);
    ++steps;
  }
  return {s.active() == 0 && steps <= bound,
          fmt("all 100 bits off after %d Adam steps (bound %d)", steps, bound)};
}

// ---------------------------------------------------------------------------
// 4

Outcome recovery_property() {
  Rng init(3);
  Network net(mlp_layers(4, {5}, 1), init);
  MaskSpec spec = MaskSpec::all_weights(net);
  TrainConfig c;
  c.epochs = 1;
  c.loss = LossKind::SigmoidBCE;
  c.momentum = 0.0;
  c.weight_decay = 5e-4;
  c.lr_start = c.lr_end = 0.1;
  MaskHyper h;
  h.warmup_fraction = 1.0;  // keep the chosen mask fixed
  c.mask = MaskConfig{spec, h};
  Trainer t(std::move(net), c);
  t.begin_epoch(0);
  std::vector<double> latent(spec.k(), 0.5);
  latent[0] = latent[7] = latent[21] = -0.5;  // masked entries
  t.mask()->set_latent(latent);
  const auto w0 = t.net().params()[0].values;
  const auto w1 = t.net().params()[2].values;
  Matrix x = Matrix::Random(16, 4);
  std::vector<int> y(16);
  for (int i = 0; i < 16; ++i) y[i] = i % 2;
  const int steps = 200;
  for (int i = 0; i < steps; ++i) t.train_step(x, y);
  const double factor = std::pow(1.0 - 0.1 * 5e-4, steps);
  double worst = 0.0;
  auto rel = [&](double got, double before) {
    worst = std::max(worst, std::abs(got - before * factor) / std::abs(before * factor));
  };
  rel(t.net().params()[0].values.data()[0], w0.data()[0]);
  rel(t.net().params()[0].values.data()[7], w0.data()[7]);
  rel(t.net().params()[2].values.data()[1], w1.data()[1]);  // entry 21 = 20 + 1
  const bool moved = t.net().params()[0].values.data()[1] != w0.data()[1] * factor;
  return {worst <= 1e-12 && moved,
          fmt("3 masked weights over %d steps, max rel deviation from (1-lr*wd)^s = %.2e", steps,
              worst)};
}

// ---------------------------------------------------------------------------
// 5, 7

struct PlantedRun {
  double recall = 0.0;
  double acc_selected = 0.0;
  double acc_full = 0.0;
  bool converged = false;
  std::size_t selected = 0;
};

const std::vector<PlantedRun>& planted_suite() {
  static std::optional<std::vector<PlantedRun>> cache;
  if (cache) return *cache;
  std::vector<PlantedRun> runs;
  const ClassifierSpec spec;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Dataset data = synth_planted_features(4000, 100, 10, 0.0, 500 + seed);
    Prepared p = prepare(data, 0.2, seed);
    const auto sel = select_by_lambda(p.train, spec, 1e-3, 10000 + seed);
    PlantedRun r;
    std::size_t hits = 0;
    for (auto i : data.informative) {
      hits += std::binary_search(sel.selected.begin(), sel.selected.end(), i) ? 1 : 0;
    }
    r.recall = static_cast<double>(hits) / 10.0;
    r.converged = sel.converged;
    r.selected = sel.selected.size();
    if (!sel.selected.empty()) {
      r.acc_selected = retrain_eval(p.train, p.test, sel.selected, spec, 1, 20000 + seed).mean_accuracy;
    }
    r.acc_full = retrain_eval(p.train, p.test, iota_cols(100), spec, 1, 20000 + seed).mean_accuracy;
    std::printf("    planted seed %llu: selected %zu, recall %.2f, acc %.4f vs full %.4f, converged %d\n",
                static_cast<unsigned long long>(seed), r.selected, r.recall, r.acc_selected,
                r.acc_full, r.converged ? 1 : 0);
    std::fflush(stdout);
    runs.push_back(r);
  }
  cache = std::move(runs);
  return *cache;
}

Outcome planted_recovery() {
  const auto& runs = planted_suite();
  std::vector<double> recall, sel, full;
  for (const auto& r : runs) {
    recall.push_back(r.recall);
    sel.push_back(r.acc_selected);
    full.push_back(r.acc_full);
  }
  const double gap = mean(sel) - mean(full);
  return {mean(recall) >= 0.9 && gap >= -0.02,
          fmt("mean recall %.3f, retrained acc %.4f vs full %.4f (diff %+.4f, no worse than -0.02)", mean(recall),
              mean(sel), mean(full), gap)};
}

Outcome convergence_reporting() {
  const auto& runs = planted_suite();
  const auto n = std::count_if(runs.begin(), runs.end(), [](const PlantedRun& r) { return r.converged; });
  return {n >= 6, fmt("%ld of 8 masks converged", static_cast<long>(n))};
}

// ---------------------------------------------------------------------------
// 6

// Monotone stand-in for training: entry i survives while lambda < t_i.
SmoothedMaskFn monotone_stub(std::vector<double> thresholds) {
  return [thresholds = std::move(thresholds)](double lambda) {
    std::vector<double> v;
    for (double t : thresholds) v.push_back(lambda < t ? 1.0 : 0.0);
    return v;
  };
}

Outcome exact_k_search() {
  // Stub: thresholds one doubling apart spanning [lambda0, lambda0 * 2^(d-1)]
  // and the mirror image below lambda0.
  bool stub_ok = true;
  int stub_worst = 0, stub_bound = 0;
  for (int direction : {+1, -1}) {
    const std::size_t d = 20;
    std::vector<double> t;
    for (std::size_t i = 0; i < d; ++i) {
      const double e = direction > 0 ? static_cast<double>(i) : static_cast<double>(i) - 19.0 + 0.5;
      t.push_back(1e-3 * std::pow(2.0, e));
    }
    const double range = t.back() / t.front();
    stub_bound = static_cast<int>(std::ceil(std::log2(range)));
    for (std::size_t k = 1; k + 1 < d; ++k) {
      const auto r = select_exact_k(k, monotone_stub(t), SearchOptions{1e-3, 64});
      stub_ok = stub_ok && r.selected.size() == k && r.search_steps <= stub_bound;
      stub_worst = std::max(stub_worst, r.search_steps);
    }
  }

  // Real training on 20 (dataset, k) configurations.
  const ClassifierSpec spec;
  int exact = 0, failed = 0, wrong = 0;
  std::vector<double> steps;
  int config = 0;
  for (std::uint64_t ds = 0; ds < 5; ++ds) {
    const std::size_t d = 20 + 5 * ds;
    const std::size_t informative = 4 + ds;
    const Dataset data = synth_planted_features(1500, d, informative, 0.0, 900 + ds);
    Prepared p = prepare(data, 0.2, ds);
    for (std::size_t k : {informative - 2, informative - 1, informative, informative + 1}) {
      ++config;
      try {
        const auto r = select_exact_k(p.train, spec, k, 30000 + ds);
        if (r.selected.size() == k) {
          ++exact;
        } else {
          ++wrong;
        }
        steps.push_back(r.search_steps);
        std::printf("    d=%zu informative=%zu k=%zu: %d steps, lambda %.3g\n", d, informative, k,
                    r.search_steps, r.lambda_star);
        std::fflush(stdout);
      } catch (const SearchExhausted& e) {
        ++failed;
        steps.push_back(static_cast<double>(e.history().size()));
      }
    }
  }
  const double mean_steps = mean(steps);
  return {stub_ok && wrong == 0 && mean_steps <= 4.0,
          fmt("%d configs: %d exact, %d explicit failures, %d wrong; mean steps %.2f; stub worst "
              "%d steps (bound %d)",
              config, exact, failed, wrong, mean_steps, stub_worst, stub_bound)};
}

// ---------------------------------------------------------------------------
// 8

Outcome tiny_oracle() {
  ClassifierSpec spec;
  spec.train.epochs = 30;
  int passed = 0;
  std::string ranks;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset data = synth_planted_features(2000, 8, 3, 0.05, 700 + seed);
    Prepared p = prepare(data, 0.2, seed);
    std::vector<std::size_t> chosen;
    try {
      chosen = select_exact_k(p.train, spec, 3, 40000 + seed).selected;
    } catch (const SearchExhausted&) {
      ranks += " fail";
      continue;
    }
    std::vector<std::pair<double, std::vector<std::size_t>>> losses;
    for (std::size_t a = 0; a < 8; ++a) {
      for (std::size_t b = a + 1; b < 8; ++b) {
        for (std::size_t c = b + 1; c < 8; ++c) {
          const std::vector<std::size_t> subset{a, b, c};
          losses.emplace_back(retrain_eval(p.train, p.test, subset, spec, 1, 50000 + seed).mean_loss,
                              subset);
        }
      }
    }
    double chosen_loss = 0.0;
    for (const auto& [loss, subset] : losses) {
      if (subset == chosen) chosen_loss = loss;
    }
    const auto rank = 1 + std::count_if(losses.begin(), losses.end(),
                                        [&](const auto& l) { return l.first < chosen_loss; });
    ranks += fmt(" %ld", static_cast<long>(rank));
    if (rank <= 14) ++passed;
  }
  return {passed == 5, fmt("BinMask subset rank among 56 per seed:%s (best quartile: rank <= 14)",
                           ranks.c_str())};
}

// ---------------------------------------------------------------------------
// 9, 11

struct DynamicsWorkload {
  Dataset train;
  TrainConfig config;
};

const DynamicsWorkload& dynamics_workload() {
  static std::optional<DynamicsWorkload> cache;
  if (cache) return *cache;
  const Dataset data = synth_planted_features(10000, 30, 6, 0.1, 77);
  Prepared p = prepare(data, 0.2, 1);
  DynamicsWorkload w;
  w.train = duplicate_to_min_batches(p.train, 256);
  w.config.epochs = 40;
  w.config.loss = LossKind::SigmoidBCE;
  w.config.seed = 5;
  cache = std::move(w);
  return *cache;
}

Network dynamics_net() {
  Rng init(11);
  return Network(mlp_layers(30, {64, 64}, 1, LayerKind::ReLU), init);
}

TrainResult dynamics_run(std::optional<double> lambda) {
  const auto& w = dynamics_workload();
  Network net = dynamics_net();
  TrainConfig c = w.config;
  if (lambda) {
    c.mask = MaskConfig{MaskSpec::all_weights(net), MaskHyper{}};
    c.regularizer = {RegularizerKind::BinMask, *lambda};
  }
  return train(std::move(net), TrainData{&w.train}, c);
}

Outcome sparsity_dynamics() {
  const auto masked = dynamics_run(1e-4);
  const auto dense = dynamics_run(0.0);
  const int warm = warmup_epochs(dynamics_workload().config.epochs, 0.1);
  const double at_warmup = *masked.metrics[static_cast<std::size_t>(warm - 1)].sparsity;
  const double final_sparsity = *masked.metrics.back().sparsity;
  const double loss = masked.metrics.back().train_loss;
  const double ref = dense.metrics.back().train_loss;
  return {final_sparsity >= 0.5 && loss <= 1.2 * ref && at_warmup == 0.0,
          fmt("final sparsity %.3f, train loss %.4f vs lambda=0 %.4f (ratio %.2f), sparsity at "
              "warmup end %.3f",
              final_sparsity, loss, ref, loss / ref, at_warmup)};
}

Outcome overhead_proxy() {
  auto time_run = [](std::optional<double> lambda) {
    const auto start = std::chrono::steady_clock::now();
    dynamics_run(lambda);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  // Interleave and keep the fastest of three to damp scheduler noise.
  double dense = 1e300, masked = 1e300;
  for (int i = 0; i < 3; ++i) {
    dense = std::min(dense, time_run(std::nullopt));
    masked = std::min(masked, time_run(1e-4));
  }
  const double overhead = masked / dense - 1.0;
  return {overhead <= 0.15,
          fmt("dense %.2f s, masked %.2f s, overhead %+.1f%%", dense, masked, 100.0 * overhead)};
}

// ---------------------------------------------------------------------------
// 10

Outcome regularization_comparison() {
  ExperimentConfig c = parse_config(nlohmann::json::parse(R"({
    "seed": 100, "trials": 8,
    "dataset": {"kind": "overfit", "n": 2000, "d": 500, "sparse_rate": 0.94, "seed": 4242},
    "mask": {"alpha0": 0.02},
    "logistic_regression": false,
    "methods": [
      {"kind": "binmask", "values": [1e-4, 1e-3, 1e-2]},
      {"kind": "l1", "values": [1e-4, 1e-3, 1e-2]},
      {"kind": "dropout", "values": [0.5]}
    ]
  })"),
                                    Task::RegularizeCompare);
  const auto out = std::filesystem::temp_directory_path() / "binmask_acceptance" / "compare";
  std::filesystem::remove_all(out);
  const auto report = run_experiment(c, {1, std::nullopt, out});
  const auto& m = report.summary["metrics"];
  const auto& best = report.summary["best"];
  auto mean_of = [&](const std::string& key) { return m.at(key).at("mean").get<double>(); };
  const double none = mean_of("none.test_auc");
  const std::string bm = best.at("binmask").at("run");
  const std::string l1 = best.at("l1").at("run");
  const double bm_auc = mean_of(bm + ".test_auc");
  const double l1_auc = mean_of(l1 + ".test_auc");
  const double bm_l0 = mean_of(bm + ".mean_weight_l0");
  const double drop_l0 = mean_of("dropout_0.5.mean_weight_l0");
  const double gap_none = mean_of("none.train_auc") - none;
  const double gap_bm = mean_of(bm + ".train_auc") - bm_auc;
  const bool pass = !report.partial && bm_auc - none >= 0.02 && l1_auc - none >= 0.02 &&
                    bm_l0 < 0.2 && drop_l0 >= 0.95;
  return {pass, fmt("test AUC none %.4f, %s %.4f (%+.4f), %s %.4f (%+.4f); weight L0 %s %.3f, "
                    "dropout %.3f; train-test gap none %.3f vs binmask %.3f",
                    none, bm.c_str(), bm_auc, bm_auc - none, l1.c_str(), l1_auc, l1_auc - none,
                    bm.c_str(), bm_l0, drop_l0, gap_none, gap_bm)};
}

// ---------------------------------------------------------------------------
// 12

std::map<std::string, std::string> read_csvs(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

Outcome determinism() {
  const auto root = std::filesystem::temp_directory_path() / "binmask_acceptance" / "determinism";
  const std::vector<std::pair<Task, std::string>> configs{
      {Task::Sparsify, R"({"seed": 9, "trials": 3,
          "dataset": {"kind": "planted", "n": 1500, "d": 20, "informative": 4},
          "network": {"layers": [{"kind": "linear", "out": 32}, {"kind": "relu"},
                                 {"kind": "batchnorm"}, {"kind": "dropout", "p": 0.1},
                                 {"kind": "linear", "out": 16}, {"kind": "tanh"}]},
          "train": {"epochs": 10}, "lambda": 1e-4})"},
      {Task::SelectFeatures, R"({"seed": 4, "trials": 2,
          "dataset": {"kind": "planted", "n": 1200, "d": 15, "informative": 3},
          "train": {"epochs": 15}, "k": 3})"},
      {Task::RegularizeCompare, R"({"seed": 1, "trials": 2,
          "dataset": {"kind": "overfit", "n": 600, "d": 60, "sparse_rate": 0.9},
          "train": {"epochs": 4},
          "methods": [{"kind": "binmask", "values": [1e-3]}, {"kind": "l1", "values": [1e-3]},
                      {"kind": "dropout", "values": [0.3]}]})"}};
  std::size_t files = 0;
  std::vector<std::string> mismatches;
  for (const auto& [task, text] : configs) {
    const auto config = parse_config(nlohmann::json::parse(text), task);
    const auto a = root / (to_string(task) + "_a");
    const auto b = root / (to_string(task) + "_b");
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
    run_experiment(config, {1, std::nullopt, a});
    run_experiment(config, {2, std::nullopt, b});
    const auto ca = read_csvs(a);
    const auto cb = read_csvs(b);
    files += ca.size();
    if (ca != cb || ca.empty()) mismatches.push_back(to_string(task));
  }
  std::string detail = fmt("%zu CSV files compared across reruns (jobs 1 vs 2)", files);
  for (const auto& m : mismatches) detail += "; mismatch in " + m;
  return {mismatches.empty(), detail};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", gradient_correctness},
      {2, "STE/quantizer unit suite", ste_quantizer_suite},
      {3, "penalty-alone sparsification", penalty_alone},
      {4, "recovery of masked weights", recovery_property},
      {5, "planted-feature recovery", planted_recovery},
      {6, "exact-k search", exact_k_search},
      {7, "convergence reporting", convergence_reporting},
      {8, "tiny-scale subset oracle", tiny_oracle},
      {9, "sparsity dynamics", sparsity_dynamics},
      {10, "regularization comparison", regularization_comparison},
      {11, "masking overhead", overhead_proxy},
      {12, "determinism", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s  criterion %2d  %-30s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
