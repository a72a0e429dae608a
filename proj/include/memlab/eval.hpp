#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memlab/attacks.hpp"
#include "memlab/data.hpp"
#include "memlab/nn.hpp"
#include "memlab/random.hpp"

namespace memlab {

struct NamedAttack {
  std::string name;
  AttackConfig cfg;
};

struct AttackOutcome {
  std::string name;
  double robust_acc = 0.0;
  std::vector<bool> correct;  // per sample, on the attack's worst-case output
};

/// Clean and robust accuracy of one network on one dataset. robust_acc may
/// exceed clean_acc on individual attacks; nothing here assumes otherwise.
struct EvalReport {
  double clean_acc = 0.0;
  std::vector<bool> clean_correct;
  std::vector<AttackOutcome> attacks;

  double robust(const std::string& name) const {
    for (const auto& a : attacks) {
      if (a.name == name) return a.robust_acc;
    }
    throw ContractError("no attack named '" + name + "' in report");
  }
};

inline double accuracy(const Labels& predicted, const Labels& truth) {
  if (predicted.size() != truth.size()) throw ShapeError("accuracy: size mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

inline double accuracy(const Network& net, const Tensor2& x, const Labels& y) { return accuracy(predict(net, x), y); }

/// Random key of sample `id` for evaluation attacks; independent of epoch so
/// that re-evaluating a checkpoint reproduces the training-time numbers.
inline std::vector<std::uint64_t> eval_attack_keys(std::uint64_t seed, std::size_t n) {
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    keys[i] = derive_key({seed, static_cast<std::uint64_t>(Stream::EvalAttack), static_cast<std::uint64_t>(i)});
  }
  return keys;
}

inline EvalReport evaluate(const Network& net, const Dataset& ds, const std::vector<NamedAttack>& attacks,
                           std::uint64_t seed) {
  EvalReport rep;
  const auto clean_pred = predict(net, ds.inputs);
  rep.clean_correct.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) rep.clean_correct[i] = clean_pred[i] == ds.labels[i];
  rep.clean_acc = accuracy(clean_pred, ds.labels);
  const auto keys = eval_attack_keys(seed, ds.size());
  for (const auto& a : attacks) {
    AttackOutcome out;
    out.name = a.name;
    const auto x_adv = pgd_attack(net, ds.inputs, ds.labels, a.cfg, keys);
    const auto pred = predict(net, x_adv);
    out.correct.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) out.correct[i] = pred[i] == ds.labels[i];
    out.robust_acc = accuracy(pred, ds.labels);
    rep.attacks.push_back(std::move(out));
  }
  return rep;
}

}  // namespace memlab
