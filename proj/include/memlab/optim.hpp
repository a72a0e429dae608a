#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>

#include "memlab/error.hpp"
#include "memlab/nn.hpp"

namespace memlab {

enum class Schedule { OneCycleCosine, Constant };

struct ScheduleConfig {
  Schedule kind = Schedule::OneCycleCosine;
  double lr_max = 0.1;
  double warmup_frac = 0.3;
};

/// Learning rate at optimizer step `step` of `total_steps`.
///
/// OneCycleCosine ramps linearly from 0 to lr_max over the first
/// W = round(warmup_frac * total_steps) steps (reaching lr_max at step W), then
/// follows lr_max * (1 + cos(pi * t)) / 2 with t going from 0 at step W to 1 at
/// the last step.
inline double lr_at(const ScheduleConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0 || step >= total_steps) throw ContractError("lr_at: step out of range");
  if (cfg.kind == Schedule::Constant) return cfg.lr_max;
  const auto warm = static_cast<std::size_t>(std::llround(cfg.warmup_frac * static_cast<double>(total_steps)));
  if (step < warm) return cfg.lr_max * static_cast<double>(step) / static_cast<double>(warm);
  const std::size_t span = total_steps - 1 - std::min(warm, total_steps - 1);
  if (span == 0) return cfg.lr_max;
  const double t = static_cast<double>(step - warm) / static_cast<double>(span);
  return cfg.lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

struct SgdConfig {
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 5e-4;
};

/// Momentum buffers, shaped like the network parameters.
struct SgdState {
  ParamGrads velocity;

  static SgdState for_network(const Network& net) { return {ParamGrads::zeros_like(net)}; }
};

/// One SGD step:  g' = g + wd * theta;  v = mu * v + g';
/// theta -= lr * (g' + mu * v) with Nesterov, theta -= lr * v without.
inline void sgd_step(Network& net, SgdState& state, const ParamGrads& grads, double lr, const SgdConfig& cfg) {
  auto& layers = net.layers();
  if (grads.weight.size() != layers.size() || state.velocity.weight.size() != layers.size()) {
    throw ShapeError("sgd_step: gradient layout does not match network");
  }
  auto update = [&](double& theta, double g, double& v) {
    const double gd = g + cfg.weight_decay * theta;
    v = cfg.momentum * v + gd;
    theta -= lr * (cfg.nesterov ? gd + cfg.momentum * v : v);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& w = layers[l].weight.data();
    auto& b = layers[l].bias;
    require_same_shape(grads.weight[l], layers[l].weight, "sgd_step");
    require_same_shape(state.velocity.weight[l], layers[l].weight, "sgd_step velocity");
    if (grads.bias[l].size() != b.size()) throw ShapeError("sgd_step: bias gradient width");
    for (std::size_t i = 0; i < w.size(); ++i) update(w[i], grads.weight[l].data()[i], state.velocity.weight[l].data()[i]);
    for (std::size_t i = 0; i < b.size(); ++i) update(b[i], grads.bias[l][i], state.velocity.bias[l][i]);
  }
}

}  // namespace memlab
