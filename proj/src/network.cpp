#include "binmask/network.hpp"

#include <cmath>
#include <utility>

#include "binmask/error.hpp"

namespace binmask {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Linear:
      return "linear";
    case LayerKind::Tanh:
      return "tanh";
    case LayerKind::ReLU:
      return "relu";
    case LayerKind::BatchNorm1d:
      return "batchnorm";
    case LayerKind::Dropout:
      return "dropout";
  }
  return "unknown";
}

LayerKind parse_layer_kind(const std::string& name) {
  if (name == "linear") return LayerKind::Linear;
  if (name == "tanh") return LayerKind::Tanh;
  if (name == "relu") return LayerKind::ReLU;
  if (name == "batchnorm") return LayerKind::BatchNorm1d;
  if (name == "dropout") return LayerKind::Dropout;
  throw ConfigError("unknown layer kind '" + name + "'");
}

Network::Network(std::vector<LayerSpec> layers, Rng& init_rng) : layers_(std::move(layers)) {
  validate();
  state_.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& spec = layers_[i];
    auto& st = state_[i];
    if (spec.kind == LayerKind::Linear) {
      st.weight = static_cast<int>(params_.size());
      params_.emplace_back(spec.in_dim, spec.out_dim);
      param_info_.push_back({i, ParamRole::Weight});
      st.bias = static_cast<int>(params_.size());
      params_.emplace_back(1, spec.out_dim);
      param_info_.push_back({i, ParamRole::Bias});
    } else if (spec.kind == LayerKind::BatchNorm1d) {
      st.weight = static_cast<int>(params_.size());
      params_.emplace_back(1, spec.out_dim);
      params_.back().values.setOnes();
      param_info_.push_back({i, ParamRole::Gamma});
      st.bias = static_cast<int>(params_.size());
      params_.emplace_back(1, spec.out_dim);
      param_info_.push_back({i, ParamRole::Beta});
      st.running_mean = Vector::Zero(spec.out_dim);
      st.running_var = Vector::Ones(spec.out_dim);
    }
  }
  init_params(init_rng);
}

void Network::validate() const {
  if (layers_.empty()) throw ConfigError("network has no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& spec = layers_[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(spec.kind) + ")";
    if (spec.in_dim < 1 || spec.out_dim < 1) throw ConfigError(where + ": dimensions must be >= 1");
    if (spec.kind != LayerKind::Linear && spec.in_dim != spec.out_dim) {
      throw ConfigError(where + ": in_dim must equal out_dim");
    }
    if (spec.kind == LayerKind::Dropout && !(spec.dropout_p >= 0.0 && spec.dropout_p < 1.0)) {
      throw ConfigError(where + ": dropout probability must be in [0, 1)");
    }
    if (spec.kind == LayerKind::BatchNorm1d && !(spec.bn_eps > 0.0)) {
      throw ConfigError(where + ": batch-norm eps must be positive");
    }
    if (i > 0 && layers_[i - 1].out_dim != spec.in_dim) {
      throw ConfigError(where + ": in_dim " + std::to_string(spec.in_dim) +
                        " does not match previous out_dim " +
                        std::to_string(layers_[i - 1].out_dim));
    }
  }
}

void Network::init_params(Rng& rng) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].kind != LayerKind::Linear) continue;
    std::size_t j = i + 1;
    while (j < layers_.size() && (layers_[j].kind == LayerKind::BatchNorm1d ||
                                  layers_[j].kind == LayerKind::Dropout)) {
      ++j;
    }
    const bool relu = j < layers_.size() && layers_[j].kind == LayerKind::ReLU;
    const double fan_in = layers_[i].in_dim;
    const double fan_out = layers_[i].out_dim;
    const double bound = relu ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto& w = params_[state_[i].weight].values;
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = dist(rng);
  }
}

const Matrix& Network::forward(const Matrix& batch, Mode mode, Rng* rng, ForwardOptions options) {
  if (batch.cols() != input_dim()) {
    throw ConfigError("forward: batch has " + std::to_string(batch.cols()) +
                      " columns, network expects " + std::to_string(input_dim()));
  }
  if (batch.rows() < 1) throw InputError("forward: empty batch");
  const bool train = mode == Mode::Train;
  if (train) input_ = batch;
  const Matrix* x = &batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& spec = layers_[i];
    auto& st = state_[i];
    Matrix& out = st.output;
    switch (spec.kind) {
      case LayerKind::Linear: {
        const auto& w = params_[st.weight].values;
        const auto& b = params_[st.bias].values;
        out.noalias() = (*x) * w;
        out.rowwise() += b.row(0);
        break;
      }
      case LayerKind::Tanh:
        out = x->array().tanh().matrix();
        break;
      case LayerKind::ReLU:
        out = x->cwiseMax(0.0);
        break;
      case LayerKind::BatchNorm1d: {
        const auto& gamma = params_[st.weight].values.row(0);
        const auto& beta = params_[st.bias].values.row(0);
        if (train) {
          const RowVector mean = x->colwise().mean();
          Matrix centered = x->rowwise() - mean;
          const RowVector var = centered.array().square().colwise().mean().matrix();
          st.inv_std = (var.array() + spec.bn_eps).rsqrt().matrix();
          st.xhat = centered.array().rowwise() * st.inv_std.array();
          out = (st.xhat.array().rowwise() * gamma.array()).rowwise() + beta.array();
          if (options.update_running_stats) {
            const double n = static_cast<double>(x->rows());
            const double unbias = n > 1 ? n / (n - 1.0) : 1.0;
            st.running_mean = spec.bn_momentum * st.running_mean +
                              (1.0 - spec.bn_momentum) * mean.transpose();
            st.running_var = spec.bn_momentum * st.running_var +
                             (1.0 - spec.bn_momentum) * unbias * var.transpose();
          }
        } else {
          const RowVector scale =
              ((st.running_var.array() + spec.bn_eps).rsqrt().transpose() * gamma.array())
                  .matrix();
          out = ((x->rowwise() - st.running_mean.transpose()).array().rowwise() * scale.array())
                    .rowwise() +
                beta.array();
        }
        break;
      }
      case LayerKind::Dropout:
        if (train) {
          const bool reuse = !options.resample_dropout && st.dropout_mask.rows() == x->rows() &&
                             st.dropout_mask.cols() == x->cols();
          if (!reuse) {
            if (rng == nullptr) throw StateError("forward: dropout in Train mode needs an rng");
            const double keep = 1.0 - spec.dropout_p;
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            st.dropout_mask.resize(x->rows(), x->cols());
            for (Eigen::Index k = 0; k < st.dropout_mask.size(); ++k) {
              st.dropout_mask.data()[k] = unit(*rng) < keep ? 1.0 / keep : 0.0;
            }
          }
          out = x->cwiseProduct(st.dropout_mask);
        } else {
          out = *x;
        }
        break;
    }
    if (!out.allFinite()) {
      throw NumericalError("forward: non-finite activation at layer " + std::to_string(i) + " (" +
                           to_string(spec.kind) + ")");
    }
    x = &out;
  }
  cached_ = train;
  has_input_grad_ = false;
  return *x;
}

void Network::backward(const Matrix& dlogits, bool need_input_grad) {
  if (!cached_) throw StateError("backward: no cached Train-mode forward pass");
  const auto& last = state_.back().output;
  if (dlogits.rows() != last.rows() || dlogits.cols() != last.cols()) {
    throw ConfigError("backward: gradient shape does not match the last forward output");
  }
  Matrix g = dlogits;
  Matrix next;
  for (std::size_t idx = layers_.size(); idx-- > 0;) {
    const auto& spec = layers_[idx];
    auto& st = state_[idx];
    const Matrix& prev = idx == 0 ? input_ : state_[idx - 1].output;
    const bool propagate = idx > 0 || need_input_grad;
    switch (spec.kind) {
      case LayerKind::Linear: {
        auto& w = params_[st.weight];
        auto& b = params_[st.bias];
        w.grad.noalias() = prev.transpose() * g;
        b.grad = g.colwise().sum();
        if (propagate) {
          next.noalias() = g * w.values.transpose();
          std::swap(g, next);
        }
        break;
      }
      case LayerKind::Tanh:
        g = (g.array() * (1.0 - st.output.array().square())).matrix();
        break;
      case LayerKind::ReLU:
        g = (g.array() * (st.output.array() > 0.0).cast<double>()).matrix();
        break;
      case LayerKind::Dropout:
        g = g.cwiseProduct(st.dropout_mask);
        break;
      case LayerKind::BatchNorm1d: {
        auto& gamma = params_[st.weight];
        auto& beta = params_[st.bias];
        gamma.grad = (g.array() * st.xhat.array()).colwise().sum().matrix();
        beta.grad = g.colwise().sum();
        const Matrix dxhat = g.array().rowwise() * gamma.values.row(0).array();
        const RowVector mean_dxhat = dxhat.colwise().mean();
        const RowVector mean_dxhat_xhat = (dxhat.array() * st.xhat.array()).colwise().mean().matrix();
        g = ((dxhat.rowwise() - mean_dxhat).array() -
             st.xhat.array().rowwise() * mean_dxhat_xhat.array())
                .rowwise() *
            st.inv_std.array();
        break;
      }
    }
  }
  if (need_input_grad) {
    input_grad_ = std::move(g);
    has_input_grad_ = true;
  }
}

const Matrix& Network::input_grad() const {
  if (!has_input_grad_) throw StateError("input_grad: backward was not asked for the input gradient");
  return input_grad_;
}

std::vector<std::size_t> Network::weight_param_ids() const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < param_info_.size(); ++i) {
    if (param_info_[i].role == ParamRole::Weight) ids.push_back(i);
  }
  return ids;
}

bool Network::has_dropout() const {
  for (const auto& spec : layers_) {
    if (spec.kind == LayerKind::Dropout) return true;
  }
  return false;
}

void Network::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::vector<LayerSpec> mlp_layers(int input_dim, const std::vector<int>& hidden, int output_dim,
                                  LayerKind activation, bool batch_norm, double dropout_p) {
  if (activation != LayerKind::Tanh && activation != LayerKind::ReLU) {
    throw ConfigError("mlp_layers: activation must be tanh or relu");
  }
  std::vector<LayerSpec> layers;
  int in = input_dim;
  for (int width : hidden) {
    layers.push_back(LayerSpec::linear(in, width));
    layers.push_back({activation, width, width});
    if (batch_norm) layers.push_back(LayerSpec::batch_norm(width));
    if (dropout_p > 0.0) layers.push_back(LayerSpec::dropout(width, dropout_p));
    in = width;
  }
  layers.push_back(LayerSpec::linear(in, output_dim));
  return layers;
}

}  // namespace binmask
