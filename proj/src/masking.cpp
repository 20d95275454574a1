#include "binmask/masking.hpp"

#include <algorithm>
#include <string>
#include <utility>

#include "binmask/error.hpp"

namespace binmask {

namespace {

void check_bits(const MaskSpec& spec, std::span<const std::uint8_t> bits) {
  if (bits.size() != spec.k()) {
    throw ConfigError("mask has " + std::to_string(bits.size()) + " bits, spec binds " +
                      std::to_string(spec.k()) + " entries");
  }
}

void multiply_block(double* values, const std::uint8_t* bits, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) values[i] *= static_cast<double>(bits[i]);
}

}  // namespace

MaskSpec& MaskSpec::add_input_features(std::size_t first, std::size_t count) {
  if (count == 0) throw ConfigError("MaskSpec: empty input binding");
  bindings_.push_back({MaskBinding::Target::InputFeatures, 0, first, count, k_});
  k_ += count;
  return *this;
}

MaskSpec& MaskSpec::add_weight_tensor(const Network& net, std::size_t param_id) {
  if (param_id >= net.params().size()) {
    throw ConfigError("MaskSpec: parameter " + std::to_string(param_id) + " does not exist");
  }
  const auto count = static_cast<std::size_t>(net.params()[param_id].size());
  bindings_.push_back({MaskBinding::Target::WeightTensor, param_id, 0, count, k_});
  k_ += count;
  return *this;
}

MaskSpec MaskSpec::input_features(std::size_t input_dim) {
  MaskSpec spec;
  spec.add_input_features(0, input_dim);
  return spec;
}

MaskSpec MaskSpec::all_weights(const Network& net) {
  MaskSpec spec;
  for (auto id : net.weight_param_ids()) spec.add_weight_tensor(net, id);
  return spec;
}

void MaskSpec::validate(const Network& net) const {
  if (k_ < 1) throw ConfigError("MaskSpec: no entries bound");
  if (k_ > n(net)) throw ConfigError("MaskSpec: more entries than maskable scalars");
  std::vector<bool> input_used(static_cast<std::size_t>(net.input_dim()), false);
  std::vector<bool> param_used(net.params().size(), false);
  for (const auto& b : bindings_) {
    if (b.target == MaskBinding::Target::InputFeatures) {
      if (b.first + b.count > input_used.size()) {
        throw ConfigError("MaskSpec: input binding [" + std::to_string(b.first) + ", " +
                          std::to_string(b.first + b.count) + ") exceeds input dim " +
                          std::to_string(net.input_dim()));
      }
      for (std::size_t j = b.first; j < b.first + b.count; ++j) {
        if (input_used[j]) throw ConfigError("MaskSpec: input feature bound twice");
        input_used[j] = true;
      }
    } else {
      if (b.param_id >= net.params().size() ||
          static_cast<std::size_t>(net.params()[b.param_id].size()) != b.count) {
        throw ConfigError("MaskSpec: weight binding does not match parameter " +
                          std::to_string(b.param_id));
      }
      if (param_used[b.param_id]) throw ConfigError("MaskSpec: parameter bound twice");
      param_used[b.param_id] = true;
    }
  }
}

std::size_t MaskSpec::n(const Network& net) {
  std::size_t total = static_cast<std::size_t>(net.input_dim());
  for (const auto& p : net.params()) total += static_cast<std::size_t>(p.size());
  return total;
}

bool MaskSpec::masks_inputs() const {
  return std::any_of(bindings_.begin(), bindings_.end(), [](const MaskBinding& b) {
    return b.target == MaskBinding::Target::InputFeatures;
  });
}

bool MaskSpec::masks_weights() const {
  return std::any_of(bindings_.begin(), bindings_.end(), [](const MaskBinding& b) {
    return b.target == MaskBinding::Target::WeightTensor;
  });
}

nlohmann::json MaskSpec::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& b : bindings_) {
    if (b.target == MaskBinding::Target::InputFeatures) {
      arr.push_back({{"target", "inputs"}, {"first", b.first}, {"count", b.count}});
    } else {
      arr.push_back({{"target", "weight"}, {"param", b.param_id}});
    }
  }
  return arr;
}

MaskSpec MaskSpec::from_json(const nlohmann::json& j, const Network& net) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inputs") return input_features(static_cast<std::size_t>(net.input_dim()));
    if (s == "weights") return all_weights(net);
    throw ConfigError("mask.targets: expected \"inputs\", \"weights\" or a binding list");
  }
  if (!j.is_array()) throw ConfigError("mask.targets: expected a string or a list");
  MaskSpec spec;
  for (const auto& b : j) {
    const auto target = b.value("target", std::string{});
    if (target == "inputs") {
      spec.add_input_features(b.value("first", std::size_t{0}),
                              b.value("count", static_cast<std::size_t>(net.input_dim())));
    } else if (target == "weight") {
      spec.add_weight_tensor(net, b.at("param").get<std::size_t>());
    } else {
      throw ConfigError("mask.targets: unknown binding target '" + target + "'");
    }
  }
  spec.validate(net);
  return spec;
}

MaskedTensors apply_mask(const MaskSpec& spec, std::span<const std::uint8_t> bits,
                         const Matrix& inputs, const std::vector<DenseMatrix>& params) {
  check_bits(spec, bits);
  MaskedTensors out;
  out.inputs = inputs;
  out.params.reserve(params.size());
  for (const auto& p : params) out.params.push_back(p.values);
  for (const auto& b : spec.bindings()) {
    if (b.target == MaskBinding::Target::InputFeatures) {
      if (b.first + b.count > static_cast<std::size_t>(inputs.cols())) {
        throw ConfigError("apply_mask: input binding exceeds input columns");
      }
      for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
        multiply_block(&out.inputs(r, static_cast<Eigen::Index>(b.first)), bits.data() + b.offset,
                       b.count);
      }
    } else {
      if (b.param_id >= params.size() ||
          static_cast<std::size_t>(params[b.param_id].size()) != b.count) {
        throw ConfigError("apply_mask: weight binding does not match parameter shape");
      }
      multiply_block(out.params[b.param_id].data(), bits.data() + b.offset, b.count);
    }
  }
  return out;
}

void mask_inputs_inplace(const MaskSpec& spec, std::span<const std::uint8_t> bits, Matrix& inputs) {
  check_bits(spec, bits);
  for (const auto& b : spec.bindings()) {
    if (b.target != MaskBinding::Target::InputFeatures) continue;
    if (b.first + b.count > static_cast<std::size_t>(inputs.cols())) {
      throw ConfigError("mask_inputs: input binding exceeds input columns");
    }
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
      multiply_block(&inputs(r, static_cast<Eigen::Index>(b.first)), bits.data() + b.offset,
                     b.count);
    }
  }
}

std::vector<double> mask_grad(const MaskSpec& spec, std::span<const std::uint8_t> bits,
                              const Matrix& inputs, const std::vector<DenseMatrix>& params,
                              const Matrix* dinputs) {
  check_bits(spec, bits);
  std::vector<double> g(spec.k(), 0.0);
  for (const auto& b : spec.bindings()) {
    if (b.target == MaskBinding::Target::InputFeatures) {
      if (dinputs == nullptr) throw StateError("mask_grad: missing input gradient");
      if (dinputs->rows() != inputs.rows() || dinputs->cols() != inputs.cols()) {
        throw ConfigError("mask_grad: input gradient shape mismatch");
      }
      const auto first = static_cast<Eigen::Index>(b.first);
      const auto count = static_cast<Eigen::Index>(b.count);
      const RowVector col_sums =
          (inputs.middleCols(first, count).array() * dinputs->middleCols(first, count).array())
              .colwise()
              .sum()
              .matrix();
      for (Eigen::Index j = 0; j < count; ++j) g[b.offset + static_cast<std::size_t>(j)] = col_sums(j);
    } else {
      if (b.param_id >= params.size()) {
        throw ConfigError("mask_grad: parameter " + std::to_string(b.param_id) + " missing");
      }
      const auto& w = params[b.param_id].values;
      const auto& dw = params[b.param_id].grad;
      if (dw.size() == 0) {
        throw StateError("mask_grad: missing gradient buffer for parameter " +
                         std::to_string(b.param_id));
      }
      if (static_cast<std::size_t>(w.size()) != b.count || dw.size() != w.size()) {
        throw ConfigError("mask_grad: weight binding does not match parameter shape");
      }
      for (std::size_t i = 0; i < b.count; ++i) g[b.offset + i] = w.data()[i] * dw.data()[i];
    }
  }
  return g;
}

Matrix weight_grad_through_mask(std::span<const std::uint8_t> bits, const Matrix& dmasked) {
  if (bits.size() != static_cast<std::size_t>(dmasked.size())) {
    throw ConfigError("weight_grad_through_mask: shape mismatch");
  }
  Matrix out = dmasked;
  multiply_block(out.data(), bits.data(), bits.size());
  return out;
}

ScopedWeightMask::ScopedWeightMask(const MaskSpec& spec, std::span<const std::uint8_t> bits,
                                   Network& net)
    : spec_(spec), net_(net), saved_(net.params().size()) {
  check_bits(spec, bits);
  for (const auto& b : spec.bindings()) {
    if (b.target != MaskBinding::Target::WeightTensor) continue;
    auto& values = net.params()[b.param_id].values;
    Matrix masked = values;
    multiply_block(masked.data(), bits.data() + b.offset, b.count);
    saved_[b.param_id] = std::move(values);
    values = std::move(masked);
  }
}

ScopedWeightMask::~ScopedWeightMask() {
  for (const auto& b : spec_.bindings()) {
    if (b.target != MaskBinding::Target::WeightTensor) continue;
    net_.params()[b.param_id].values = std::move(saved_[b.param_id]);
  }
}

const Matrix& ScopedWeightMask::original(std::size_t param_id) const {
  if (param_id < saved_.size() && saved_[param_id].size() > 0) return saved_[param_id];
  return net_.params()[param_id].values;
}

}  // namespace binmask
