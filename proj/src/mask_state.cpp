#include "binmask/mask_state.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "binmask/error.hpp"

namespace binmask {

BinaryMask quantize(std::span<const double> latent) {
  BinaryMask bits(latent.size());
  std::transform(latent.begin(), latent.end(), bits.begin(),
                 [](double x) -> std::uint8_t { return x >= 0.0 ? 1 : 0; });
  return bits;
}

std::vector<double> ste_backward(std::span<const double> grad_wrt_bits) {
  return {grad_wrt_bits.begin(), grad_wrt_bits.end()};
}

std::vector<double> penalty_grad(std::span<const std::uint8_t> bits, double lambda) {
  if (!(lambda >= 0.0)) throw InputError("penalty_grad: lambda must be >= 0");
  std::vector<double> g(bits.size());
  std::transform(bits.begin(), bits.end(), g.begin(),
                 [lambda](std::uint8_t b) { return b ? lambda : 0.0; });
  return g;
}

bool mask_converged(std::span<const double> smoothed) {
  if (smoothed.empty()) throw InputError("mask_converged: empty mask");
  const auto undecided = std::count_if(smoothed.begin(), smoothed.end(),
                                       [](double v) { return v >= 0.15 && v <= 0.85; });
  // Integer form of undecided <= 0.2 * k.
  return 5 * static_cast<std::size_t>(undecided) <= smoothed.size();
}

int warmup_epochs(int epochs, double warmup_fraction) {
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw InputError("warmup_epochs: fraction must be in [0, 1]");
  }
  return static_cast<int>(std::round(warmup_fraction * epochs));
}

MaskState::MaskState(std::size_t size, MaskHyper hyper)
    : latent_(size, hyper.alpha0), smoothed_(size, 0.0), adam_(size), hyper_(hyper) {
  if (size == 0) throw ConfigError("MaskState: mask must have at least one entry");
  if (!(hyper.alpha1 > 0.0)) throw ConfigError("MaskState: alpha1 must be positive");
  if (!(hyper.lambda >= 0.0)) throw ConfigError("MaskState: lambda must be >= 0");
  if (!(hyper.gamma >= 0.0 && hyper.gamma <= 1.0)) {
    throw ConfigError("MaskState: gamma must be in [0, 1]");
  }
  for (auto& x : latent_) x = std::clamp(x, -hyper.alpha1, hyper.alpha1);
  bits_ = quantize(latent_);
}

void MaskState::mask_update(std::span<const double> task_grad_wrt_bits, double lr) {
  if (frozen_) throw StateError("mask_update: mask is frozen");
  if (task_grad_wrt_bits.size() != latent_.size()) {
    throw ConfigError("mask_update: gradient has " + std::to_string(task_grad_wrt_bits.size()) +
                      " entries, mask has " + std::to_string(latent_.size()));
  }
  auto g = ste_backward(task_grad_wrt_bits);
  const auto pen = penalty_grad(bits_, hyper_.lambda);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += pen[i];
  adam_step(adam_, latent_, g, lr);
  for (std::size_t i = 0; i < latent_.size(); ++i) {
    latent_[i] = std::clamp(latent_[i], -hyper_.alpha1, hyper_.alpha1);
    bits_[i] = latent_[i] >= 0.0 ? 1 : 0;
  }
}

void MaskState::smooth_update() {
  const double gamma = hyper_.gamma;
  for (std::size_t i = 0; i < smoothed_.size(); ++i) {
    smoothed_[i] = gamma * smoothed_[i] + (1.0 - gamma) * bits_[i];
  }
}

std::size_t MaskState::active() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double MaskState::penalty() const { return 0.5 * hyper_.lambda * static_cast<double>(active()); }

double MaskState::sparsity() const {
  if (bits_.empty()) return 0.0;
  return static_cast<double>(bits_.size() - active()) / static_cast<double>(bits_.size());
}

void MaskState::set_latent(std::vector<double> latent) {
  if (latent.size() != latent_.size()) throw ConfigError("set_latent: size mismatch");
  for (auto& x : latent) x = std::clamp(x, -hyper_.alpha1, hyper_.alpha1);
  latent_ = std::move(latent);
  bits_ = quantize(latent_);
}

nlohmann::json MaskState::to_json() const {
  return {
      {"latent", latent_},
      {"smoothed", smoothed_},
      {"adam_m", adam_.m},
      {"adam_v", adam_.v},
      {"adam_step", adam_.t},
      {"frozen", frozen_},
      {"hyper",
       {{"alpha0", hyper_.alpha0},
        {"alpha1", hyper_.alpha1},
        {"lambda", hyper_.lambda},
        {"gamma", hyper_.gamma},
        {"eta0", hyper_.eta0},
        {"eta1", hyper_.eta1},
        {"warmup_fraction", hyper_.warmup_fraction}}},
  };
}

MaskState MaskState::from_json(const nlohmann::json& j) {
  try {
    const auto& h = j.at("hyper");
    MaskHyper hyper{h.at("alpha0").get<double>(),  h.at("alpha1").get<double>(),
                    h.at("lambda").get<double>(),  h.at("gamma").get<double>(),
                    h.at("eta0").get<double>(),    h.at("eta1").get<double>(),
                    h.at("warmup_fraction").get<double>()};
    auto latent = j.at("latent").get<std::vector<double>>();
    MaskState s(latent.size(), hyper);
    s.set_latent(std::move(latent));
    s.smoothed_ = j.at("smoothed").get<std::vector<double>>();
    s.adam_.m = j.at("adam_m").get<std::vector<double>>();
    s.adam_.v = j.at("adam_v").get<std::vector<double>>();
    s.adam_.t = j.at("adam_step").get<std::int64_t>();
    s.frozen_ = j.at("frozen").get<bool>();
    const auto n = s.latent_.size();
    if (s.smoothed_.size() != n || s.adam_.m.size() != n || s.adam_.v.size() != n) {
      throw InputError("mask state: vector lengths disagree");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("mask state: ") + e.what());
  }
}

}  // namespace binmask
