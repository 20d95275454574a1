#include "binmask/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "binmask/error.hpp"
#include "binmask/stats.hpp"

namespace binmask {

std::string to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::None:
      return "none";
    case RegularizerKind::BinMask:
      return "binmask";
    case RegularizerKind::L1:
      return "l1";
    case RegularizerKind::L2:
      return "l2";
    case RegularizerKind::Dropout:
      return "dropout";
  }
  return "unknown";
}

RegularizerKind parse_regularizer(const std::string& name) {
  if (name == "none") return RegularizerKind::None;
  if (name == "binmask") return RegularizerKind::BinMask;
  if (name == "l1") return RegularizerKind::L1;
  if (name == "l2") return RegularizerKind::L2;
  if (name == "dropout") return RegularizerKind::Dropout;
  throw ConfigError("unknown regularizer '" + name + "'");
}

namespace {

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string optional_field(const std::optional<double>& v) { return v ? format_real(*v) : ""; }

void validate_config(const Network& net, const TrainConfig& config) {
  if (config.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (config.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (config.finetune_epochs < 0) throw ConfigError("train: finetune_epochs must be >= 0");
  const auto& reg = config.regularizer;
  if (reg.value < 0.0) throw ConfigError("train: regularizer value must be >= 0");
  if (reg.kind == RegularizerKind::BinMask && !config.mask) {
    throw ConfigError("train: the binmask regularizer needs a mask specification");
  }
  if (reg.kind == RegularizerKind::Dropout) {
    bool found = false;
    for (const auto& l : net.layers()) {
      if (l.kind == LayerKind::Dropout) {
        if (std::abs(l.dropout_p - reg.value) > 1e-12) {
          throw ConfigError("train: dropout layer probability differs from the regularizer value");
        }
        found = true;
      }
    }
    if (!found) throw ConfigError("train: dropout regularizer but the network has no dropout layer");
  }
  if (config.mask) config.mask->spec.validate(net);
  const int expected_out = config.loss == LossKind::SigmoidBCE ? 1 : net.output_dim();
  if (net.output_dim() != expected_out) {
    throw ConfigError("train: sigmoid BCE needs a single output unit");
  }
}

}  // namespace

std::string metrics_csv_header() {
  return "epoch,train_loss,test_loss,test_acc,val_auc,sparsity,mask_lr";
}

std::string metrics_csv_row(const EpochMetrics& m) {
  return std::to_string(m.epoch) + "," + format_real(m.train_loss) + "," +
         optional_field(m.test_loss) + "," + optional_field(m.test_accuracy) + "," +
         optional_field(m.validation_auc) + "," + optional_field(m.sparsity) + "," +
         optional_field(m.mask_lr);
}

Trainer::Trainer(Network net, TrainConfig config)
    : net_(std::move(net)), config_(std::move(config)), rng_(config_.seed) {
  validate_config(net_, config_);
  if (config_.mask) {
    auto hyper = config_.mask->hyper;
    if (config_.regularizer.kind == RegularizerKind::BinMask) hyper.lambda = config_.regularizer.value;
    config_.mask->hyper = hyper;
    mask_.emplace(config_.mask->spec.k(), hyper);
    mask_->set_frozen(true);
    warmup_epochs_ = binmask::warmup_epochs(config_.epochs, hyper.warmup_fraction);
  }
  sgd_.momentum = config_.momentum;
  sgd_.weight_decay = config_.weight_decay;
  adamw_.weight_decay = config_.weight_decay;
  if (config_.regularizer.kind == RegularizerKind::L2) {
    sgd_.weight_decay = config_.regularizer.value;
    adamw_.weight_decay = config_.regularizer.value;
  }
  set_weight_lr(config_.lr_start);
}

void Trainer::set_weight_lr(double lr) {
  weight_lr_ = lr;
  sgd_.lr = lr;
  adamw_.lr = lr;
}

void Trainer::begin_epoch(int epoch) {
  if (epoch < 0) throw InputError("begin_epoch: negative epoch");
  const int total = config_.epochs;
  if (epoch < total) {
    set_weight_lr(cosine_lr({config_.lr_start, config_.lr_end, static_cast<std::size_t>(total)},
                            static_cast<std::size_t>(epoch)));
  } else {
    const auto finetune = static_cast<std::size_t>(std::max(config_.finetune_epochs, 1));
    const auto step = std::min(static_cast<std::size_t>(epoch - total), finetune - 1);
    set_weight_lr(cosine_lr({config_.lr_start / 10.0, config_.lr_end, finetune}, step));
  }
  mask_lr_.reset();
  if (!mask_) return;
  const bool trainable = epoch >= warmup_epochs_ && epoch < total;
  mask_->set_frozen(!trainable);
  if (trainable) {
    const auto& h = mask_->hyper();
    const CosineSchedule schedule{h.eta0, h.eta1, static_cast<std::size_t>(total - warmup_epochs_)};
    mask_lr_ = cosine_lr(schedule, static_cast<std::size_t>(epoch - warmup_epochs_));
  }
}

double Trainer::train_step(const Matrix& inputs, std::span<const int> labels) {
  const MaskSpec* spec = mask_ ? &config_.mask->spec : nullptr;
  const bool mask_inputs = spec && spec->masks_inputs();
  const bool train_mask = mask_ && !mask_->frozen();

  std::span<const std::uint8_t> bits;
  if (mask_) {
    bits = mask_->bits();
    mask_->smooth_update();
  }
  const Matrix* x = &inputs;
  if (mask_inputs) {
    masked_inputs_ = inputs;
    mask_inputs_inplace(*spec, bits, masked_inputs_);
    x = &masked_inputs_;
  }

  double loss = 0.0;
  {
    std::optional<ScopedWeightMask> scope;
    if (spec && spec->masks_weights()) scope.emplace(*spec, bits, net_);
    const Matrix& logits = net_.forward(*x, Mode::Train, &rng_);
    const auto result = loss_and_grad(logits, labels, config_.loss);
    loss = result.loss;
    net_.backward(result.dlogits, mask_inputs && train_mask);
  }

  std::vector<double> mask_gradient;
  if (train_mask) {
    mask_gradient = mask_grad(*spec, bits, inputs, net_.params(),
                              mask_inputs ? &net_.input_grad() : nullptr);
  }
  if (spec) {
    for (const auto& b : spec->bindings()) {
      if (b.target != MaskBinding::Target::WeightTensor) continue;
      auto& grad = net_.params()[b.param_id].grad;
      const std::uint8_t* bb = bits.data() + b.offset;
      for (std::size_t i = 0; i < b.count; ++i) grad.data()[i] *= static_cast<double>(bb[i]);
    }
  }
  if (config_.regularizer.kind == RegularizerKind::L1 && config_.regularizer.value > 0.0) {
    const double lambda = config_.regularizer.value;
    for (auto id : net_.weight_param_ids()) {
      auto& p = net_.params()[id];
      p.grad += (lambda * p.values.array().sign()).matrix();
    }
  }
  if (config_.optimizer == OptimizerKind::SgdMomentum) {
    sgd_step(sgd_, net_.params());
  } else {
    adamw_step(adamw_, net_.params());
  }
  if (train_mask) mask_->mask_update(mask_gradient, *mask_lr_);
  return loss;
}

Matrix Trainer::predict(const Matrix& inputs) {
  const MaskSpec* spec = mask_ ? &config_.mask->spec : nullptr;
  Matrix x = inputs;
  std::optional<ScopedWeightMask> scope;
  if (spec) {
    mask_inputs_inplace(*spec, mask_->bits(), x);
    if (spec->masks_weights()) scope.emplace(*spec, mask_->bits(), net_);
  }
  return net_.forward(x, Mode::Eval);
}

EvalResult Trainer::evaluate(const Dataset& data) {
  const Matrix logits = predict(data.features);
  EvalResult r;
  r.loss = loss_value(logits, data.labels, config_.loss);
  r.accuracy = accuracy(logits, data.labels, config_.loss);
  if (data.num_classes == 2) {
    const bool both = std::find(data.labels.begin(), data.labels.end(), 0) != data.labels.end() &&
                      std::find(data.labels.begin(), data.labels.end(), 1) != data.labels.end();
    if (both) {
      const Vector s = positive_scores(logits, config_.loss);
      r.auc = auc(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), data.labels);
    }
  }
  return r;
}

TrainResult train(Network net, const TrainData& data, const TrainConfig& config) {
  if (data.train == nullptr || data.train->rows() == 0) throw InputError("train: empty training set");
  const Dataset& train_set = *data.train;
  if (static_cast<int>(train_set.dims()) != net.input_dim()) {
    throw ConfigError("train: dataset has " + std::to_string(train_set.dims()) +
                      " features, network expects " + std::to_string(net.input_dim()));
  }
  if (config.early_stopping && (data.validation == nullptr || data.validation->rows() == 0)) {
    throw ConfigError("train: early stopping needs a validation set");
  }
  Trainer trainer(std::move(net), config);

  const std::size_t n = train_set.rows();
  const std::size_t batch = std::min(config.batch_size, n);
  const std::size_t iterations = n / batch;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Matrix x(static_cast<Eigen::Index>(batch), train_set.features.cols());
  std::vector<int> y(batch);

  TrainResult result{trainer.net(), std::nullopt, {}, -1};
  std::vector<Network> checkpoints;
  std::vector<std::optional<MaskState>> mask_checkpoints;
  std::vector<double> val_aucs;

  const int total_epochs = config.epochs + config.finetune_epochs;
  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    trainer.begin_epoch(epoch);
    std::shuffle(order.begin(), order.end(), trainer.rng());
    double loss_sum = 0.0;
    for (std::size_t t = 0; t < iterations; ++t) {
      for (std::size_t i = 0; i < batch; ++i) {
        const auto row = static_cast<Eigen::Index>(order[t * batch + i]);
        x.row(static_cast<Eigen::Index>(i)) = train_set.features.row(row);
        y[i] = train_set.labels[static_cast<std::size_t>(row)];
      }
      try {
        loss_sum += trainer.train_step(x, y);
      } catch (const NumericalError& e) {
        throw NumericalError("train: diverged at epoch " + std::to_string(epoch) + " iteration " +
                             std::to_string(t) + ": " + e.what());
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(iterations);
    if (data.test != nullptr && data.test->rows() > 0) {
      const auto ev = trainer.evaluate(*data.test);
      m.test_loss = ev.loss;
      m.test_accuracy = ev.accuracy;
    }
    if (data.validation != nullptr && data.validation->rows() > 0) {
      m.validation_auc = trainer.evaluate(*data.validation).auc;
    }
    if (trainer.mask()) {
      m.sparsity = trainer.mask()->sparsity();
      m.mask_lr = trainer.mask_lr();
    }
    result.metrics.push_back(m);
    if (config.early_stopping) {
      if (!m.validation_auc) {
        throw ConfigError("train: early stopping needs a binary validation set with both classes");
      }
      checkpoints.push_back(trainer.net());
      mask_checkpoints.push_back(trainer.mask());
      val_aucs.push_back(*m.validation_auc);
    }
  }

  if (config.early_stopping) {
    const auto best = early_stop_select(val_aucs);
    result.selected_epoch = static_cast<int>(best);
    result.net = std::move(checkpoints[best]);
    result.mask = std::move(mask_checkpoints[best]);
  } else {
    result.selected_epoch = total_epochs - 1;
    result.net = std::move(trainer.net());
    result.mask = std::move(trainer.mask());
  }
  return result;
}

TrainResult train_with_l1(Network net, const Dataset& data, double lambda, TrainConfig config) {
  config.regularizer = {RegularizerKind::L1, lambda};
  config.mask.reset();
  return train(std::move(net), TrainData{&data, nullptr, nullptr}, config);
}

std::size_t early_stop_select(std::span<const double> validation_auc) {
  if (validation_auc.empty()) throw InputError("early_stop_select: no checkpoints");
  std::size_t best = 0;
  for (std::size_t i = 1; i < validation_auc.size(); ++i) {
    if (validation_auc[i] > validation_auc[best]) best = i;
  }
  return best;
}

WeightNorms weight_norm_report(const Network& net, const MaskSpec* spec,
                               std::span<const std::uint8_t> bits) {
  std::vector<Matrix> values;
  for (const auto& p : net.params()) values.push_back(p.values);
  if (spec != nullptr) {
    if (bits.size() != spec->k()) throw ConfigError("weight_norm_report: mask size mismatch");
    for (const auto& b : spec->bindings()) {
      if (b.target != MaskBinding::Target::WeightTensor) continue;
      for (std::size_t i = 0; i < b.count; ++i) {
        values[b.param_id].data()[i] *= static_cast<double>(bits[b.offset + i]);
      }
    }
  }
  double count = 0.0;
  double nonzero = 0.0;
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (auto id : net.weight_param_ids()) {
    const auto& w = values[id];
    count += static_cast<double>(w.size());
    nonzero += static_cast<double>((w.array().abs() >= 1e-4).count());
    abs_sum += w.array().abs().sum();
    sq_sum += w.array().square().sum();
  }
  if (count == 0.0) return {};
  return {nonzero / count, abs_sum / count, std::sqrt(sq_sum / count)};
}

}  // namespace binmask
