#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "memlab/attacks.hpp"
#include "memlab/data.hpp"
#include "memlab/error.hpp"
#include "memlab/eval.hpp"
#include "memlab/losses.hpp"
#include "memlab/memory.hpp"
#include "memlab/nn.hpp"
#include "memlab/optim.hpp"
#include "memlab/random.hpp"

namespace memlab {

struct TrainConfig {
  std::vector<std::size_t> hidden = {20, 20};
  std::size_t epochs = 120;
  std::size_t batch_size = 128;
  ScheduleConfig schedule{Schedule::Constant, 0.005, 0.3};
  SgdConfig sgd{0.9, true, 5e-4};
  std::uint64_t seed = 0;
  AttackConfig train_attack;
  AttackConfig early_stop_attack{Norm::Linf, 0.1, 0.025, 20, 1, Objective::CE, InitKind::UniformBall, 0.0, std::nullopt};
  LossConfig loss;

  void validate() const {
    if (epochs < 1) throw ConfigError("must be >= 1", "train.epochs");
    if (batch_size < 1) throw ConfigError("must be >= 1", "train.batch_size");
    // lr 0 is accepted: it freezes the model, which the forgetting checks use.
    if (hidden.empty() == false) {
      for (auto h : hidden) {
        if (h == 0) throw ConfigError("hidden widths must be >= 1", "model.hidden");
      }
    }
    if (!(schedule.lr_max >= 0.0) || !std::isfinite(schedule.lr_max)) throw ConfigError("must be >= 0", "train.lr_max");
    if (!(schedule.warmup_frac >= 0.0 && schedule.warmup_frac < 1.0)) throw ConfigError("must lie in [0, 1)", "train.warmup_frac");
    if (!(sgd.momentum >= 0.0)) throw ConfigError("must be >= 0", "train.momentum");
    if (!(sgd.weight_decay >= 0.0)) throw ConfigError("must be >= 0", "train.weight_decay");
    auto scoped = [](const char* section, auto&& fn) {
      try {
        fn();
      } catch (const ConfigError& e) {
        throw e.within(section);
      }
    };
    scoped("attack_train", [&] { train_attack.validate(); });
    scoped("attack_eval", [&] { early_stop_attack.validate(); });
    scoped("loss", [&] { loss.validate(); });
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_ce = 0.0;
  double loss_kl = 0.0;
  double loss_mem = 0.0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct TrainState {
  Network net;
  SgdState optimizer;
  std::optional<MemoryBank> memory;
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // completed optimizer steps
  Network best_net;
  double best_robust = -1.0;
  std::size_t best_epoch = 0;
  std::vector<EpochMetrics> history;
};

/// What an observer sees after each epoch. `adversarial` holds, by sample id,
/// the training adversarial example generated for that sample this epoch.
struct EpochView {
  const TrainState& state;
  const EpochMetrics& metrics;
  const Tensor2& adversarial;
};

using EpochObserver = std::function<void(const EpochView&)>;

struct TrainResult {
  TrainState final;
  Network best;
};

/// Per-sample key for the training attack of epoch `epoch`.
inline std::uint64_t train_attack_key(std::uint64_t seed, std::size_t epoch, std::size_t sample_id) {
  return derive_key({seed, static_cast<std::uint64_t>(Stream::TrainAttack), epoch, sample_id});
}

inline TrainState init_state(const TrainConfig& cfg, const Dataset& train_ds) {
  std::vector<std::size_t> dims{train_ds.dim()};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(train_ds.num_classes);
  TrainState st;
  st.net = Network::create(dims, cfg.seed);
  st.optimizer = SgdState::for_network(st.net);
  if (uses_memory(cfg.loss.method)) st.memory = MemoryBank::init_clean(train_ds.inputs, cfg.loss.K);
  st.best_net = st.net;
  return st;
}

inline std::size_t batches_per_epoch(const TrainConfig& cfg, const Dataset& ds) {
  return (ds.size() + cfg.batch_size - 1) / cfg.batch_size;
}

/// Runs one epoch of training on `st` (mini-batch attack, loss, SGD update,
/// then memory push and test-set evaluation). Returns the epoch's
/// adversarial examples indexed by sample id.
inline Tensor2 run_epoch(TrainState& st, const Dataset& train_ds, const Dataset& test_ds, const TrainConfig& cfg) {
  const std::size_t n = st.epoch + 1;
  const std::size_t total_steps = cfg.epochs * batches_per_epoch(cfg, train_ds);
  const Method method = cfg.loss.method;
  Tensor2 epoch_adv = train_ds.inputs;

  EpochMetrics m;
  m.epoch = n;
  std::size_t b_index = 0;
  for (const auto& batch : batch_iter(train_ds, cfg.batch_size, cfg.seed, n)) {
    const double lr = lr_at(cfg.schedule, std::min(st.step, total_steps - 1), total_steps);
    Tensor2 x_adv;
    if (uses_adversary(method)) {
      std::vector<std::uint64_t> keys(batch.ids.size());
      for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = train_attack_key(cfg.seed, n, batch.ids[i]);
      x_adv = pgd_attack(st.net, batch.inputs, batch.labels, cfg.train_attack, keys);
      for (std::size_t i = 0; i < batch.ids.size(); ++i) {
        auto src = x_adv.row(i);
        std::copy(src.begin(), src.end(), epoch_adv.row(batch.ids[i]).begin());
      }
    }
    std::vector<Tensor2> mem;
    if (st.memory) mem = st.memory->fetch(batch.ids);

    auto ev = evaluate_loss(st.net, batch.inputs, batch.labels, x_adv, mem, cfg.loss, true);
    bool finite = std::isfinite(ev.value.total);
    for (const auto& [name, v] : ev.value.components) finite = finite && std::isfinite(v);
    if (!finite) {
      std::ostringstream msg;
      msg << "non-finite loss at epoch " << n << ", batch " << b_index << ":";
      msg << " total=" << ev.value.total;
      for (const auto& [name, v] : ev.value.components) msg << ' ' << name << '=' << v;
      throw TrainingAborted(msg.str());
    }
    sgd_step(st.net, st.optimizer, ev.params, lr, cfg.sgd);
    ++st.step;
    m.lr = lr;

    const double w = static_cast<double>(batch.ids.size()) / static_cast<double>(train_ds.size());
    m.loss_total += w * ev.value.total;
    m.loss_ce += w * ev.value.component("ce");
    m.loss_kl += w * ev.value.component("robust_kl");
    m.loss_mem += w * ev.value.memory_part();
    ++b_index;
  }

  if (st.memory) {
    std::vector<std::size_t> all(train_ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    st.memory->push(all, epoch_adv, static_cast<long>(n));
  }

  auto rep = evaluate(st.net, test_ds, {{"pgd", cfg.early_stop_attack}}, cfg.seed);
  m.clean_acc = rep.clean_acc;
  m.robust_acc = rep.robust("pgd");
  if (m.robust_acc > st.best_robust) {
    st.best_robust = m.robust_acc;
    st.best_epoch = n;
    st.best_net = st.net;
  }
  st.history.push_back(m);
  st.epoch = n;
  return epoch_adv;
}

/// Full training run. The best network is the snapshot with the highest test
/// robust accuracy under cfg.early_stop_attack (earliest epoch on ties).
inline TrainResult train(const Dataset& train_ds, const Dataset& test_ds, const TrainConfig& cfg,
                         const EpochObserver& observer = {}) {
  cfg.validate();
  train_ds.validate();
  test_ds.validate();
  if (train_ds.size() == 0 || test_ds.size() == 0) throw DataError("train: empty dataset");
  if (test_ds.dim() != train_ds.dim()) throw ShapeError("train: train/test feature widths differ");
  TrainState st = init_state(cfg, train_ds);
  while (st.epoch < cfg.epochs) {
    Tensor2 adv = run_epoch(st, train_ds, test_ds, cfg);
    if (observer) observer(EpochView{st, st.history.back(), adv});
  }
  Network best = st.best_net;
  return {std::move(st), std::move(best)};
}

}  // namespace memlab
