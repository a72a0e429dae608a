#pragma once

// Subcommand bodies behind tools/memlab. Each returns the process exit code:
// 0 success, 1 runtime failure, 2 configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "memlab/config.hpp"
#include "memlab/error.hpp"
#include "memlab/eval.hpp"
#include "memlab/io.hpp"
#include "memlab/memory.hpp"
#include "memlab/report.hpp"
#include "memlab/train.hpp"

namespace memlab {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2 };

struct CommandStreams {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

namespace detail {

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    fn();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("write failed for " + path.string());
}

inline void prepare_run_dir(const std::filesystem::path& dir, const LoadedConfig& loaded) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.input.json", loaded.input_text);
  write_text(dir / "config.json", to_json(loaded.config).dump(2) + "\n");
}

inline std::string metrics_row(const EpochMetrics& m) {
  return std::to_string(m.epoch) + ',' + fmt17(m.lr) + ',' + fmt17(m.loss_total) + ',' + fmt17(m.loss_ce) + ',' +
         fmt17(m.loss_kl) + ',' + fmt17(m.loss_mem) + ',' + fmt17(m.clean_acc) + ',' + fmt17(m.robust_acc) + '\n';
}

inline void require_2d(const Dataset& ds, const char* what) {
  if (ds.dim() != 2) {
    throw ConfigError(std::string(what) + " needs 2-D inputs, data has " + std::to_string(ds.dim()) + " features",
                      "data");
  }
}

inline std::string attack_name(const AttackConfig& a) {
  std::string n = "pgd" + std::to_string(a.steps);
  if (a.restarts > 1) n += "x" + std::to_string(a.restarts);
  return n;
}

}  // namespace detail

inline const char* kMetricsHeader = "epoch,lr,loss_total,loss_ce,loss_kl,loss_mem,clean_acc,robust_acc_pgd20\n";

/// Trains one run and writes into out_dir: config.input.json (bytes as
/// given), config.json (resolved), epoch_{n}.ckpt, best.ckpt, metrics.csv and,
/// for memory methods, memory.bank.
inline int cmd_train(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                     const std::vector<std::string>& overrides = {}, CommandStreams io = {}) {
  return detail::guarded(io.err, [&] {
    const auto loaded = load_run_config(config_path, overrides);
    const auto& cfg = loaded.config;
    const auto [train_ds, test_ds] = make_datasets(cfg);
    detail::prepare_run_dir(out_dir, loaded);

    std::ofstream metrics(out_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!metrics) throw DataError("cannot write " + (out_dir / "metrics.csv").string());
    metrics << kMetricsHeader;
    auto res = train(train_ds, test_ds, cfg.train, [&](const EpochView& v) {
      save_network(out_dir / ("epoch_" + std::to_string(v.metrics.epoch) + ".ckpt"), v.state.net);
      metrics << detail::metrics_row(v.metrics) << std::flush;
      io.out << "epoch " << v.metrics.epoch << "  loss " << std::setprecision(6) << v.metrics.loss_total << "  clean "
             << v.metrics.clean_acc << "  robust " << v.metrics.robust_acc << "\n";
    });
    save_network(out_dir / "best.ckpt", res.best);
    if (res.final.memory) res.final.memory->save(out_dir / "memory.bank");
    io.out << "best epoch " << res.final.best_epoch << "  robust " << res.final.best_robust << "\n";
  });
}

/// Evaluates a checkpoint on the configured test split: clean accuracy and one
/// attack_eval run per entry of report.eval_restarts. Prints a table and
/// writes <checkpoint>.eval.json.
inline int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& config_path,
                    const std::vector<std::string>& overrides = {}, CommandStreams io = {}) {
  return detail::guarded(io.err, [&] {
    const auto cfg = load_run_config(config_path, overrides).config;
    const Network net = load_network(checkpoint);
    const auto [train_ds, test_ds] = make_datasets(cfg);
    if (net.input_dim() != test_ds.dim() || net.num_classes() != test_ds.num_classes) {
      throw DataError("checkpoint shape does not match the configured data");
    }
    std::vector<NamedAttack> attacks;
    for (auto r : cfg.report.eval_restarts) {
      AttackConfig a = cfg.train.early_stop_attack;
      a.restarts = r;
      attacks.push_back({detail::attack_name(a), a});
    }
    const auto rep = evaluate(net, test_ds, attacks, cfg.train.seed);

    std::size_t w = 5;
    for (const auto& a : rep.attacks) w = std::max(w, a.name.size());
    io.out << std::left << std::setw(static_cast<int>(w)) << "name" << "  accuracy\n";
    io.out << std::setw(static_cast<int>(w)) << "clean" << "  " << std::fixed << std::setprecision(4) << rep.clean_acc
           << "\n";
    for (const auto& a : rep.attacks) io.out << std::setw(static_cast<int>(w)) << a.name << "  " << a.robust_acc << "\n";
    io.out << std::defaultfloat << std::right;

    Json j;
    j["checkpoint"] = checkpoint.string();
    j["n_samples"] = test_ds.size();
    j["clean_acc"] = rep.clean_acc;
    j["robust_acc"] = Json::object();
    for (const auto& a : rep.attacks) j["robust_acc"][a.name] = a.robust_acc;
    auto out_path = checkpoint;
    out_path += ".eval.json";
    detail::write_text(out_path, j.dump(2) + "\n");
  });
}

/// Beta grid over report.sweep_betas x report.sweep_beta_mems; writes sweep.csv.
inline int cmd_sweep(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                     const std::vector<std::string>& overrides = {}, CommandStreams io = {}) {
  return detail::guarded(io.err, [&] {
    const auto loaded = load_run_config(config_path, overrides);
    const auto& cfg = loaded.config;
    const auto [train_ds, test_ds] = make_datasets(cfg);
    detail::prepare_run_dir(out_dir, loaded);
    const auto rows = beta_sweep(cfg.train, train_ds, test_ds, cfg.report.sweep_betas, cfg.report.sweep_beta_mems);
    write_sweep_csv(out_dir / "sweep.csv", rows);
    for (const auto& r : rows) {
      io.out << "beta " << r.beta << "  beta_mem " << r.beta_mem << "  clean " << r.clean << "  robust " << r.robust
             << "\n";
    }
  });
}

namespace detail {

inline ForgettingRun forgetting_with_plots(const std::string& name, const RunConfig& cfg, const Dataset& train_ds,
                                           const Dataset& test_ds, const std::filesystem::path& out_dir) {
  std::set<std::size_t> wanted(cfg.report.plot_epochs.begin(), cfg.report.plot_epochs.end());
  if (wanted.empty()) wanted.insert(cfg.train.epochs);
  auto file = [&](std::size_t net_epoch, std::size_t adv_epoch) {
    return out_dir / (name + "_boundary" + std::to_string(net_epoch) + "_adv" + std::to_string(adv_epoch) + ".ppm");
  };
  return run_forgetting(name, train_ds, test_ds, cfg.train,
                        [&](std::size_t n, const Network& prev_net, const Tensor2& prev_adv, const Network& cur_net,
                            const Tensor2& cur_adv) {
                          if (!wanted.count(n)) return;
                          boundary_plot(prev_net, train_ds, cfg.report.plot, file(n - 1, n - 1), &prev_adv);
                          boundary_plot(cur_net, train_ds, cfg.report.plot, file(n, n), &cur_adv);
                          boundary_plot(cur_net, train_ds, cfg.report.plot, file(n, n - 1), &prev_adv);
                        });
}

}  // namespace detail

/// Forgetting experiment on 2-D data. With `pair_config`, a second run on the
/// same data follows and the summary reports both mean drops.
inline int cmd_forgetting(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                          const std::optional<std::filesystem::path>& pair_config = std::nullopt,
                          const std::vector<std::string>& overrides = {}, CommandStreams io = {}) {
  return detail::guarded(io.err, [&] {
    const auto loaded = load_run_config(config_path, overrides);
    const auto& cfg = loaded.config;
    std::optional<LoadedConfig> paired;
    if (pair_config) paired = load_run_config(*pair_config, overrides);
    const auto [train_ds, test_ds] = make_datasets(cfg);
    detail::require_2d(train_ds, "forgetting");
    detail::prepare_run_dir(out_dir, loaded);
    if (paired) {
      detail::write_text(out_dir / "config.pair.input.json", paired->input_text);
      detail::write_text(out_dir / "config.pair.json", to_json(paired->config).dump(2) + "\n");
    }

    std::vector<ForgettingRun> runs;
    std::string name = detail::kMethods.to_string(cfg.train.loss.method);
    runs.push_back(detail::forgetting_with_plots(name, cfg, train_ds, test_ds, out_dir));
    if (paired) {
      std::string pname = detail::kMethods.to_string(paired->config.train.loss.method);
      if (pname == name) pname += "_pair";
      runs.push_back(detail::forgetting_with_plots(pname, paired->config, train_ds, test_ds, out_dir));
    }
    write_forgetting_csv(out_dir / "forgetting.csv", runs);

    io.out << "mean drop over last " << cfg.report.forgetting_window << " epochs:";
    for (const auto& r : runs) io.out << "  " << r.name << " " << detail::fmt17(r.mean_drop(cfg.report.forgetting_window));
    io.out << "\n";
  });
}

/// Decision-boundary raster of a checkpoint over the training points.
inline int cmd_plot_boundary(const std::filesystem::path& checkpoint, const std::filesystem::path& config_path,
                             const std::filesystem::path& out_path, const std::vector<std::string>& overrides = {},
                             CommandStreams io = {}) {
  return detail::guarded(io.err, [&] {
    const auto cfg = load_run_config(config_path, overrides).config;
    const auto [train_ds, test_ds] = make_datasets(cfg);
    detail::require_2d(train_ds, "plot-boundary");
    const Network net = load_network(checkpoint);
    if (net.input_dim() != 2) throw DataError("checkpoint does not take 2-D inputs");
    boundary_plot(net, train_ds, cfg.report.plot, out_path);
    io.out << "wrote " << out_path.string() << "\n";
  });
}

}  // namespace memlab
