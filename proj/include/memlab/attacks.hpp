#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "memlab/error.hpp"
#include "memlab/nn.hpp"
#include "memlab/parallel.hpp"
#include "memlab/random.hpp"
#include "memlab/tensor.hpp"

namespace memlab {

enum class Norm { Linf, L2 };

/// Quantity the attack ascends.
///  CE          cross-entropy of the true label
///  KLFromClean KL(f(x_clean) || f(x_cur)), reference distribution held fixed
///  CWMargin    max_{j != y} z_j - z_y on logits
enum class Objective { CE, KLFromClean, CWMargin };

/// Starting point of each restart. Gaussian uses init_noise_std; UniformBall
/// samples uniformly in the eps-ball; None starts at the clean input.
enum class InitKind { Gaussian, UniformBall, None };

struct Box {
  double lo = 0.0;
  double hi = 1.0;
  friend bool operator==(const Box&, const Box&) = default;
};

struct AttackConfig {
  Norm norm = Norm::Linf;
  double eps = 0.1;
  double alpha = 0.025;
  std::size_t steps = 10;
  std::size_t restarts = 1;
  Objective objective = Objective::CE;
  InitKind init = InitKind::Gaussian;
  double init_noise_std = 0.001;
  std::optional<Box> domain_box;

  void validate() const {
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw ConfigError("eps must be a finite value >= 0", "eps");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be > 0", "alpha");
    if (restarts < 1) throw ConfigError("restarts must be >= 1", "restarts");
    if (!(init_noise_std >= 0.0)) throw ConfigError("init_noise_std must be >= 0", "init_noise_std");
    if (domain_box && !(domain_box->lo < domain_box->hi)) throw ConfigError("domain_box needs lo < hi", "domain_box");
  }

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

/// Projects each row of `delta` onto the eps-ball of the given norm.
inline Tensor2 project(Tensor2 delta, Norm norm, double eps) {
  for (std::size_t r = 0; r < delta.rows(); ++r) {
    auto d = delta.row(r);
    if (norm == Norm::Linf) {
      for (double& v : d) v = std::clamp(v, -eps, eps);
    } else {
      double sq = 0.0;
      for (double v : d) sq += v * v;
      double n = std::sqrt(sq);
      if (n > eps) {
        double s = eps / n;
        for (double& v : d) v *= s;
      }
    }
  }
  return delta;
}

/// Per-row objective values and their input gradients.
struct ObjectiveEval {
  std::vector<double> value;
  Tensor2 grad;
  Labels predicted;
};

namespace detail {

/// Gradient w.r.t. logits of KL(p || q) for a fixed reference row p, where q is
/// the softmax of the logits. Uses sum(p) = 1 analytically so that p == q gives
/// an exact zero.
inline void kl_grad_wrt_q_logits(std::span<const double> p, std::span<const double> q, std::span<double> out) {
  double floored_mass = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (!(q[c] > kProbFloor)) floored_mass += p[c];
  }
  const double live = 1.0 - floored_mass;
  for (std::size_t c = 0; c < p.size(); ++c) {
    out[c] = q[c] * live - (q[c] > kProbFloor ? p[c] : 0.0);
  }
}

inline double safe_log(double v) { return std::log(std::max(v, kProbFloor)); }

inline double kl_row(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) s += p[c] * (safe_log(p[c]) - safe_log(q[c]));
  return s;
}

/// Evaluates `objective` row-wise at x_cur; ref_probs is f(x_clean) for KL.
inline ObjectiveEval eval_objective(const Network& net, const Tensor2& x_cur, const Tensor2* ref_probs,
                                    std::span<const int> y, Objective objective, bool want_grad) {
  auto tr = forward(net, x_cur);
  const std::size_t m = x_cur.rows();
  const std::size_t C = net.num_classes();
  ObjectiveEval out;
  out.value.assign(m, 0.0);
  out.predicted = argmax_rows(tr.probs);
  Tensor2 gz(m, C);
  Tensor2 z;
  if (objective == Objective::CWMargin) z = clamped_logits(tr);
  for (std::size_t r = 0; r < m; ++r) {
    auto q = tr.probs.row(r);
    auto g = gz.row(r);
    const auto yr = static_cast<std::size_t>(y[r]);
    switch (objective) {
      case Objective::CE: {
        out.value[r] = -safe_log(q[yr]);
        if (q[yr] > kProbFloor) {
          for (std::size_t c = 0; c < C; ++c) g[c] = q[c] - (c == yr ? 1.0 : 0.0);
        }
        break;
      }
      case Objective::KLFromClean: {
        auto p = ref_probs->row(r);
        out.value[r] = kl_row(p, q);
        kl_grad_wrt_q_logits(p, q, g);
        break;
      }
      case Objective::CWMargin: {
        auto zr = z.row(r);
        std::size_t best = yr == 0 ? 1 : 0;
        for (std::size_t c = 0; c < C; ++c) {
          if (c != yr && zr[c] > zr[best]) best = c;
        }
        out.value[r] = zr[best] - zr[yr];
        g[best] = 1.0;
        g[yr] = -1.0;
        break;
      }
    }
  }
  if (want_grad) out.grad = backward_inputs(net, tr, gz);
  return out;
}

}  // namespace detail

/// Input gradient of the per-sample objective at x_cur (rows are independent;
/// no batch averaging). For KLFromClean the reference f(x_clean) is constant.
inline Tensor2 attack_objective_grad(const Network& net, const Tensor2& x_cur, const Tensor2& x_clean, const Labels& y,
                                     Objective objective) {
  require_same_shape(x_cur, x_clean, "attack_objective_grad");
  check_labels(y, x_cur.rows(), net.num_classes());
  Tensor2 ref;
  if (objective == Objective::KLFromClean) ref = probabilities(net, x_clean);
  return detail::eval_objective(net, x_cur, &ref, y, objective, true).grad;
}

/// Per-sample objective values at x_cur.
inline std::vector<double> attack_objective_value(const Network& net, const Tensor2& x_cur, const Tensor2& x_clean,
                                                  const Labels& y, Objective objective) {
  require_same_shape(x_cur, x_clean, "attack_objective_value");
  check_labels(y, x_cur.rows(), net.num_classes());
  Tensor2 ref;
  if (objective == Objective::KLFromClean) ref = probabilities(net, x_clean);
  return detail::eval_objective(net, x_cur, &ref, y, objective, false).value;
}

namespace detail {

inline void clamp_to_box(std::span<double> row, const std::optional<Box>& box) {
  if (!box) return;
  for (double& v : row) v = std::clamp(v, box->lo, box->hi);
}

/// x_adv = box(x + project(x_adv - x)).
inline void project_into_feasible(Tensor2& x_adv, const Tensor2& x, const AttackConfig& cfg) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto a = x_adv.row(r);
    auto c = x.row(r);
    if (cfg.norm == Norm::Linf) {
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = c[i] + std::clamp(a[i] - c[i], -cfg.eps, cfg.eps);
    } else {
      double sq = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - c[i]) * (a[i] - c[i]);
      double n = std::sqrt(sq);
      if (n > cfg.eps) {
        double s = cfg.eps / n;
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = c[i] + (a[i] - c[i]) * s;
      }
    }
    clamp_to_box(a, cfg.domain_box);
  }
}

inline void init_row(std::span<double> a, std::span<const double> x, const AttackConfig& cfg, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (cfg.init) {
    case InitKind::None:
      std::copy(x.begin(), x.end(), a.begin());
      break;
    case InitKind::Gaussian:
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = x[i] + cfg.init_noise_std * normal(rng);
      break;
    case InitKind::UniformBall:
      if (cfg.norm == Norm::Linf) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = x[i] + cfg.eps * (2.0 * unit(rng) - 1.0);
      } else {
        std::vector<double> dir(a.size());
        double sq = 0.0;
        for (double& d : dir) {
          d = normal(rng);
          sq += d * d;
        }
        double n = std::sqrt(sq);
        double radius = cfg.eps * std::pow(unit(rng), 1.0 / static_cast<double>(a.size()));
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = x[i] + (n > 0.0 ? radius * dir[i] / n : 0.0);
      }
      break;
  }
}

inline Tensor2 pgd_rows(const Network& net, const Tensor2& x, std::span<const int> y, const AttackConfig& cfg,
                        std::span<const std::uint64_t> keys) {
  const std::size_t m = x.rows();
  Tensor2 ref;
  if (cfg.objective == Objective::KLFromClean) ref = probabilities(net, x);

  Tensor2 best = x;
  std::vector<double> best_value(m, -INFINITY);
  std::vector<char> best_fooled(m, 0);

  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    Tensor2 adv(m, x.cols());
    for (std::size_t r = 0; r < m; ++r) {
      Rng rng = make_rng(derive_key({keys[r], static_cast<std::uint64_t>(restart)}));
      init_row(adv.row(r), x.row(r), cfg, rng);
    }
    project_into_feasible(adv, x, cfg);
    for (std::size_t t = 0; t < cfg.steps; ++t) {
      auto ev = eval_objective(net, adv, &ref, y, cfg.objective, true);
      for (std::size_t r = 0; r < m; ++r) {
        auto a = adv.row(r);
        auto g = ev.grad.row(r);
        if (cfg.norm == Norm::Linf) {
          for (std::size_t i = 0; i < a.size(); ++i) {
            double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
            a[i] += cfg.alpha * s;
          }
        } else {
          double sq = 0.0;
          for (double v : g) sq += v * v;
          double n = std::sqrt(sq);
          if (n > 0.0) {
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += cfg.alpha * g[i] / n;
          }
        }
      }
      project_into_feasible(adv, x, cfg);
    }
    if (cfg.restarts == 1) return adv;
    auto final_eval = eval_objective(net, adv, &ref, y, cfg.objective, false);
    for (std::size_t r = 0; r < m; ++r) {
      const char fooled = final_eval.predicted[r] != y[r];
      const bool better = restart == 0 || (fooled > best_fooled[r]) ||
                          (fooled == best_fooled[r] && final_eval.value[r] > best_value[r]);
      if (better) {
        best_fooled[r] = fooled;
        best_value[r] = final_eval.value[r];
        auto src = adv.row(r);
        std::copy(src.begin(), src.end(), best.row(r).begin());
      }
    }
  }
  return best;
}

}  // namespace detail

/// Projected gradient ascent on `cfg.objective` inside the eps-ball around each
/// row of x. Row r draws its randomness from `row_keys[r]` only, so results do
/// not depend on batch composition or thread count. With several restarts the
/// per-sample winner is the first restart that misclassifies, otherwise the one
/// with the largest objective.
inline Tensor2 pgd_attack(const Network& net, const Tensor2& x, const Labels& y, const AttackConfig& cfg,
                          std::span<const std::uint64_t> row_keys) {
  cfg.validate();
  if (x.cols() != net.input_dim()) throw ShapeError("pgd_attack: input width does not match network");
  check_labels(y, x.rows(), net.num_classes());
  if (row_keys.size() != x.rows()) throw ShapeError("pgd_attack: need one random key per row");

  Tensor2 out(x.rows(), x.cols());
  parallel_chunks(x.rows(), 64, [&](std::size_t b, std::size_t e) {
    std::vector<std::size_t> idx(e - b);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = b + i;
    Tensor2 xs = gather_rows(x, idx);
    auto adv = detail::pgd_rows(net, xs, std::span<const int>(y).subspan(b, e - b), cfg, row_keys.subspan(b, e - b));
    std::copy(adv.data().begin(), adv.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * x.cols()));
  });
  return out;
}

/// Convenience overload: row r uses the key derived from (seed, r).
inline Tensor2 pgd_attack(const Network& net, const Tensor2& x, const Labels& y, const AttackConfig& cfg,
                          std::uint64_t seed) {
  std::vector<std::uint64_t> keys(x.rows());
  for (std::size_t r = 0; r < keys.size(); ++r) keys[r] = derive_key({seed, static_cast<std::uint64_t>(r)});
  return pgd_attack(net, x, y, cfg, keys);
}

/// Norm of each row of (a - b) in the given norm.
inline std::vector<double> perturbation_norms(const Tensor2& a, const Tensor2& b, Norm norm) {
  require_same_shape(a, b, "perturbation_norms");
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto ar = a.row(r);
    auto br = b.row(r);
    double acc = 0.0;
    for (std::size_t i = 0; i < ar.size(); ++i) {
      double d = std::abs(ar[i] - br[i]);
      acc = norm == Norm::Linf ? std::max(acc, d) : acc + d * d;
    }
    out[r] = norm == Norm::Linf ? acc : std::sqrt(acc);
  }
  return out;
}

}  // namespace memlab
