#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "memlab/attacks.hpp"
#include "memlab/error.hpp"
#include "memlab/nn.hpp"
#include "memlab/tensor.hpp"

namespace memlab {

/// Training objectives.
///  Standard   CE(f(x), y)
///  AT         CE(f(x_adv), y)
///  TRADES     CE(f(x), y) + beta KL(f(x) || f(x_adv))
///  MemLossV1  TRADES + sum_k beta'_k KL(f(x) || f(m_k)) (1 - p_y(m_k))
///  MemLossV2  TRADES + sum_k beta'_k KL(f(x) || f(m_k))
///  MemLossV3  TRADES + sum_k beta'_k KL(f(m_k) || f(x_adv))
/// where m_k is memory slot k (oldest first).
enum class Method { Standard, AT, TRADES, MemLossV1, MemLossV2, MemLossV3 };

inline bool uses_memory(Method m) {
  return m == Method::MemLossV1 || m == Method::MemLossV2 || m == Method::MemLossV3;
}
inline bool uses_adversary(Method m) { return m != Method::Standard; }

struct LossConfig {
  Method method = Method::TRADES;
  double beta = 6.0;
  std::vector<double> beta_mem;  // one weight per memory slot, oldest first
  std::size_t K = 0;
  bool stop_grad_weight = true;

  void validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be a finite value >= 0", "beta");
    if (beta_mem.size() != K) {
      throw ConfigError("beta_mem has " + std::to_string(beta_mem.size()) + " entries but K = " + std::to_string(K),
                        "beta_mem");
    }
    for (double b : beta_mem) {
      if (!(b >= 0.0) || !std::isfinite(b)) throw ConfigError("entries must be finite and >= 0", "beta_mem");
    }
    if (uses_memory(method) && K == 0) throw ConfigError("memory methods need K >= 1", "K");
  }

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// A loss total with its named parts. `total` is the left-to-right sum of the
/// components in insertion order.
struct LossValue {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> components;

  void add(std::string name, double v) {
    components.emplace_back(std::move(name), v);
    total += v;
  }

  double component(const std::string& name) const {
    for (const auto& [n, v] : components) {
      if (n == name) return v;
    }
    return 0.0;
  }

  /// Sum of all "mem_*" components.
  double memory_part() const {
    double s = 0.0;
    for (const auto& [n, v] : components) {
      if (n.rfind("mem_", 0) == 0) s += v;
    }
    return s;
  }
};

inline std::string memory_component_name(std::size_t k) { return "mem_" + std::to_string(k); }

/// Mean over rows of -log p_y (probabilities floored at kProbFloor).
inline LossValue ce_loss(const Tensor2& probs, const Labels& y) {
  check_labels(y, probs.rows(), probs.cols());
  double s = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) s += -detail::safe_log(probs(r, static_cast<std::size_t>(y[r])));
  LossValue v;
  v.add("ce", s * (probs.rows() ? 1.0 / static_cast<double>(probs.rows()) : 0.0));
  return v;
}

/// Mean over rows of sum_c p_c log(p_c / q_c), logs floored at kProbFloor.
inline double kl_div(const Tensor2& p, const Tensor2& q) {
  require_same_shape(p, q, "kl_div");
  double s = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) s += detail::kl_row(p.row(r), q.row(r));
  return s * (p.rows() ? 1.0 / static_cast<double>(p.rows()) : 0.0);
}

/// Loss value plus gradients w.r.t. parameters and every input tensor.
struct LossEvaluation {
  LossValue value;
  ParamGrads params;
  Tensor2 grad_x;
  Tensor2 grad_adv;
  std::vector<Tensor2> grad_memory;
};

namespace detail {

/// dKL(p || q)/d(logits of p), scaled by `scale`, added into `out`.
inline void add_kl_grad_wrt_p_logits(std::span<const double> p, std::span<const double> q, double scale,
                                     std::span<double> out) {
  double pd = 0.0;
  double floored_mass = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    pd += p[c] * (safe_log(p[c]) - safe_log(q[c]));
    if (!(p[c] > kProbFloor)) floored_mass += p[c];
  }
  for (std::size_t c = 0; c < p.size(); ++c) {
    double d = safe_log(p[c]) - safe_log(q[c]);
    double ind = (p[c] > kProbFloor ? 1.0 : 0.0) - 1.0 + floored_mass;
    out[c] += scale * (p[c] * (d - pd) + p[c] * ind);
  }
}

inline void add_kl_grad_wrt_q_logits(std::span<const double> p, std::span<const double> q, double scale,
                                     std::span<double> out) {
  std::vector<double> g(p.size());
  kl_grad_wrt_q_logits(p, q, g);
  for (std::size_t c = 0; c < p.size(); ++c) out[c] += scale * g[c];
}

inline void add_ce_grad(std::span<const double> p, std::size_t y, double scale, std::span<double> out) {
  if (!(p[y] > kProbFloor)) return;
  for (std::size_t c = 0; c < p.size(); ++c) out[c] += scale * (p[c] - (c == y ? 1.0 : 0.0));
}

inline void check_memory(const Tensor2& x, std::span<const Tensor2> memory, const LossConfig& cfg) {
  if (memory.size() != cfg.K) {
    throw ContractError("memory: got " + std::to_string(memory.size()) + " slots, config has K = " + std::to_string(cfg.K));
  }
  for (const auto& m : memory) require_same_shape(m, x, "memory slot");
}

}  // namespace detail

/// Evaluates the configured loss on one batch and, if requested, its exact
/// gradients. `x_adv` may be empty for Standard; `memory` must hold K slots
/// aligned with x for memory methods.
inline LossEvaluation evaluate_loss(const Network& net, const Tensor2& x, const Labels& y, const Tensor2& x_adv,
                                    std::span<const Tensor2> memory, const LossConfig& cfg, bool want_grads = true) {
  cfg.validate();
  check_labels(y, x.rows(), net.num_classes());
  const Method method = cfg.method;
  const bool need_adv = uses_adversary(method);
  const bool need_mem = uses_memory(method);
  if (need_adv) require_same_shape(x_adv, x, "x_adv");
  if (need_mem) detail::check_memory(x, memory, cfg);

  const std::size_t m = x.rows();
  const std::size_t C = net.num_classes();
  const double inv_m = m ? 1.0 / static_cast<double>(m) : 0.0;

  ForwardTrace fx;
  if (method != Method::AT) fx = forward(net, x);
  ForwardTrace fadv;
  if (need_adv) fadv = forward(net, x_adv);
  std::vector<ForwardTrace> fmem;
  if (need_mem) {
    for (const auto& slot : memory) fmem.push_back(forward(net, slot));
  }

  Tensor2 gx(m, C);
  Tensor2 gadv(m, C);
  std::vector<Tensor2> gmem(fmem.size(), Tensor2(m, C));
  LossEvaluation out;

  // Classification term.
  {
    const Tensor2& probs = method == Method::AT ? fadv.probs : fx.probs;
    Tensor2& g = method == Method::AT ? gadv : gx;
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const auto yr = static_cast<std::size_t>(y[r]);
      s += -detail::safe_log(probs(r, yr));
      detail::add_ce_grad(probs.row(r), yr, inv_m, g.row(r));
    }
    out.value.add("ce", s * inv_m);
  }

  if (method == Method::Standard || method == Method::AT) {
    // no robust term
  } else {
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      auto p = fx.probs.row(r);
      auto q = fadv.probs.row(r);
      s += detail::kl_row(p, q);
      detail::add_kl_grad_wrt_p_logits(p, q, cfg.beta * inv_m, gx.row(r));
      detail::add_kl_grad_wrt_q_logits(p, q, cfg.beta * inv_m, gadv.row(r));
    }
    out.value.add("robust_kl", cfg.beta * (s * inv_m));
  }

  for (std::size_t k = 0; k < fmem.size(); ++k) {
    const double bk = cfg.beta_mem[k];
    const Tensor2& pm = fmem[k].probs;
    double s = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      const auto yr = static_cast<std::size_t>(y[r]);
      switch (method) {
        case Method::MemLossV1: {
          auto p = fx.probs.row(r);
          auto q = pm.row(r);
          const double kl = detail::kl_row(p, q);
          const double w = 1.0 - q[yr];
          s += kl * w;
          detail::add_kl_grad_wrt_p_logits(p, q, bk * inv_m * w, gx.row(r));
          detail::add_kl_grad_wrt_q_logits(p, q, bk * inv_m * w, gmem[k].row(r));
          if (!cfg.stop_grad_weight) {
            // d(1 - p_y)/dz_j = -p_y (delta_jy - p_j)
            auto g = gmem[k].row(r);
            for (std::size_t c = 0; c < C; ++c) {
              g[c] += bk * inv_m * kl * (-q[yr] * ((c == yr ? 1.0 : 0.0) - q[c]));
            }
          }
          break;
        }
        case Method::MemLossV2: {
          auto p = fx.probs.row(r);
          auto q = pm.row(r);
          s += detail::kl_row(p, q);
          detail::add_kl_grad_wrt_p_logits(p, q, bk * inv_m, gx.row(r));
          detail::add_kl_grad_wrt_q_logits(p, q, bk * inv_m, gmem[k].row(r));
          break;
        }
        case Method::MemLossV3: {
          auto p = pm.row(r);
          auto q = fadv.probs.row(r);
          s += detail::kl_row(p, q);
          detail::add_kl_grad_wrt_p_logits(p, q, bk * inv_m, gmem[k].row(r));
          detail::add_kl_grad_wrt_q_logits(p, q, bk * inv_m, gadv.row(r));
          break;
        }
        default:
          break;
      }
    }
    out.value.add(memory_component_name(k), bk * (s * inv_m));
  }

  if (!want_grads) return out;

  out.params = ParamGrads::zeros_like(net);
  if (method != Method::AT) {
    auto g = backward(net, fx, gx);
    out.params += g.params;
    out.grad_x = std::move(g.inputs);
  } else {
    out.grad_x = Tensor2(m, x.cols());
  }
  if (need_adv) {
    auto g = backward(net, fadv, gadv);
    out.params += g.params;
    out.grad_adv = std::move(g.inputs);
  }
  for (std::size_t k = 0; k < fmem.size(); ++k) {
    auto g = backward(net, fmem[k], gmem[k]);
    out.params += g.params;
    out.grad_memory.push_back(std::move(g.inputs));
  }
  return out;
}

/// Value of the configured loss (see Method).
inline LossValue total_loss(const Network& net, const Tensor2& x, const Labels& y, const Tensor2& x_adv,
                            std::span<const Tensor2> memory, const LossConfig& cfg) {
  return evaluate_loss(net, x, y, x_adv, memory, cfg, false).value;
}

/// CE(f(x), y) + beta KL(f(x) || f(x_adv)).
inline LossValue trades_loss(const Network& net, const Tensor2& x, const Tensor2& x_adv, const Labels& y, double beta) {
  LossConfig cfg;
  cfg.method = Method::TRADES;
  cfg.beta = beta;
  return total_loss(net, x, y, x_adv, {}, cfg);
}

/// The memory regularizer alone: sum_k beta'_k mean_r[KL(f(x) || f(m_k)) (1 - p_y(m_k))].
inline LossValue memloss_k_term(const Network& net, const Tensor2& x, const Labels& y, std::span<const Tensor2> memory,
                                std::span<const double> beta_mem) {
  if (memory.size() != beta_mem.size()) {
    throw ContractError("memloss_k_term: " + std::to_string(memory.size()) + " memory slots for " +
                        std::to_string(beta_mem.size()) + " weights");
  }
  check_labels(y, x.rows(), net.num_classes());
  const Tensor2 px = probabilities(net, x);
  LossValue out;
  for (std::size_t k = 0; k < memory.size(); ++k) {
    require_same_shape(memory[k], x, "memory slot");
    const Tensor2 pm = probabilities(net, memory[k]);
    double s = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      s += detail::kl_row(px.row(r), pm.row(r)) * (1.0 - pm(r, static_cast<std::size_t>(y[r])));
    }
    out.add(memory_component_name(k), beta_mem[k] * (x.rows() ? s / static_cast<double>(x.rows()) : 0.0));
  }
  return out;
}

}  // namespace memlab
