#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "memlab/data.hpp"
#include "memlab/error.hpp"
#include "memlab/eval.hpp"
#include "memlab/nn.hpp"
#include "memlab/train.hpp"

namespace memlab {

// ---------------------------------------------------------------------------
// Forgetting of the previous epoch's adversarial examples

struct ForgettingRecord {
  std::size_t epoch = 0;
  double acc_on_prev_adv_before = 0.0;  // model of epoch n-1 on its own epoch n-1 examples
  double acc_on_prev_adv_after = 0.0;   // model of epoch n on the same examples
  double drop = 0.0;                    // before - after
};

struct ForgettingRun {
  std::string name;
  std::vector<ForgettingRecord> records;
  TrainResult result;

  /// Mean drop over the last `window` records (all of them if fewer).
  double mean_drop(std::size_t window) const {
    if (records.empty()) return 0.0;
    const std::size_t k = std::min(window, records.size());
    double s = 0.0;
    for (std::size_t i = records.size() - k; i < records.size(); ++i) s += records[i].drop;
    return s / static_cast<double>(k);
  }
};

/// Called for every consecutive epoch pair (n-1, n) with both models and both
/// epochs' training adversarial examples.
using EpochPairHook = std::function<void(std::size_t epoch, const Network& prev_net, const Tensor2& prev_adv,
                                         const Network& cur_net, const Tensor2& cur_adv)>;

inline ForgettingRun run_forgetting(std::string name, const Dataset& train_ds, const Dataset& test_ds,
                                    const TrainConfig& cfg, const EpochPairHook& on_pair = {}) {
  ForgettingRun run;
  run.name = std::move(name);
  std::optional<Network> prev_net;
  Tensor2 prev_adv;
  run.result = train(train_ds, test_ds, cfg, [&](const EpochView& v) {
    if (prev_net) {
      ForgettingRecord rec;
      rec.epoch = v.metrics.epoch;
      rec.acc_on_prev_adv_before = accuracy(*prev_net, prev_adv, train_ds.labels);
      rec.acc_on_prev_adv_after = accuracy(v.state.net, prev_adv, train_ds.labels);
      rec.drop = rec.acc_on_prev_adv_before - rec.acc_on_prev_adv_after;
      run.records.push_back(rec);
      if (on_pair) on_pair(v.metrics.epoch, *prev_net, prev_adv, v.state.net, v.adversarial);
    }
    prev_net = v.state.net;
    prev_adv = v.adversarial;
  });
  return run;
}

struct NamedTrainConfig {
  std::string name;
  TrainConfig cfg;
};

/// One forgetting run per config on the same data.
inline std::vector<ForgettingRun> forgetting_experiment(const std::vector<NamedTrainConfig>& cfgs, const Dataset& train_ds,
                                                        const Dataset& test_ds) {
  std::vector<ForgettingRun> out;
  for (const auto& c : cfgs) out.push_back(run_forgetting(c.name, train_ds, test_ds, c.cfg));
  return out;
}

inline void write_forgetting_csv(const std::filesystem::path& path, const std::vector<ForgettingRun>& runs) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << "run,epoch,acc_before,acc_after,drop\n";
  os.precision(17);
  for (const auto& r : runs) {
    for (const auto& rec : r.records) {
      os << r.name << ',' << rec.epoch << ',' << rec.acc_on_prev_adv_before << ',' << rec.acc_on_prev_adv_after << ','
         << rec.drop << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Decision-boundary rasters (binary PPM)

struct PlotGrid {
  std::size_t width = 400;
  std::size_t height = 400;
  double x_min = -3.0;
  double x_max = 3.0;
  double y_min = -2.5;
  double y_max = 2.5;

  /// Centre of pixel (col, row); row 0 is the top edge (y_max).
  std::array<double, 2> cell_center(std::size_t col, std::size_t row) const {
    const double dx = (x_max - x_min) / static_cast<double>(width);
    const double dy = (y_max - y_min) / static_cast<double>(height);
    return {x_min + (static_cast<double>(col) + 0.5) * dx, y_max - (static_cast<double>(row) + 0.5) * dy};
  }
};

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  void set(std::size_t col, std::size_t row, std::array<std::uint8_t, 3> c) {
    auto* p = rgb.data() + 3 * (row * width + col);
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
  std::array<std::uint8_t, 3> at(std::size_t col, std::size_t row) const {
    const auto* p = rgb.data() + 3 * (row * width + col);
    return {p[0], p[1], p[2]};
  }
};

namespace palette {
inline constexpr std::array<std::uint8_t, 3> kRegion0{135, 206, 235};  // sky blue
inline constexpr std::array<std::uint8_t, 3> kRegion1{255, 165, 0};    // orange
inline constexpr std::array<std::uint8_t, 3> kPoint0{20, 40, 200};     // blue
inline constexpr std::array<std::uint8_t, 3> kPoint1{20, 150, 40};     // green
inline constexpr std::array<std::uint8_t, 3> kAdversarial{220, 20, 20};

inline std::array<std::uint8_t, 3> region(int cls) {
  if (cls == 0) return kRegion0;
  if (cls == 1) return kRegion1;
  auto h = static_cast<std::uint8_t>(37 * cls);
  return {h, static_cast<std::uint8_t>(255 - h), 128};
}
inline std::array<std::uint8_t, 3> point(int cls) { return cls == 0 ? kPoint0 : cls == 1 ? kPoint1 : region(cls + 7); }
}  // namespace palette

/// Predicted class at every cell centre, row-major from the top-left.
inline Labels cell_classes(const Network& net, const PlotGrid& grid) {
  if (net.input_dim() != 2) throw ShapeError("boundary plot needs a 2-D input network");
  Tensor2 centres(grid.width * grid.height, 2);
  for (std::size_t row = 0; row < grid.height; ++row) {
    for (std::size_t col = 0; col < grid.width; ++col) {
      auto c = grid.cell_center(col, row);
      centres(row * grid.width + col, 0) = c[0];
      centres(row * grid.width + col, 1) = c[1];
    }
  }
  return predict(net, centres);
}

inline void draw_points(Image& img, const PlotGrid& grid, const Tensor2& pts, const Labels* labels, int radius,
                        std::optional<std::array<std::uint8_t, 3>> color = std::nullopt) {
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    const double fx = (pts(i, 0) - grid.x_min) / (grid.x_max - grid.x_min) * static_cast<double>(grid.width);
    const double fy = (grid.y_max - pts(i, 1)) / (grid.y_max - grid.y_min) * static_cast<double>(grid.height);
    const auto cx = static_cast<long>(std::floor(fx));
    const auto cy = static_cast<long>(std::floor(fy));
    const auto col = color ? *color : palette::point(labels ? (*labels)[i] : 0);
    for (long dy = -radius; dy <= radius; ++dy) {
      for (long dx = -radius; dx <= radius; ++dx) {
        long x = cx + dx;
        long y = cy + dy;
        if (x < 0 || y < 0 || x >= static_cast<long>(grid.width) || y >= static_cast<long>(grid.height)) continue;
        img.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y), col);
      }
    }
  }
}

/// Raster of predicted classes with optional data and adversarial overlays.
inline Image render_boundary(const Network& net, const PlotGrid& grid, const Dataset* points = nullptr,
                             const Tensor2* adversarial = nullptr) {
  if (grid.width == 0 || grid.height == 0 || !(grid.x_min < grid.x_max) || !(grid.y_min < grid.y_max)) {
    throw ConfigError("plot grid needs positive size and increasing bounds", "report.plot");
  }
  if (points && points->dim() != 2) throw ShapeError("boundary plot needs 2-D data");
  Image img{grid.width, grid.height, std::vector<std::uint8_t>(3 * grid.width * grid.height)};
  const auto classes = cell_classes(net, grid);
  for (std::size_t row = 0; row < grid.height; ++row) {
    for (std::size_t col = 0; col < grid.width; ++col) img.set(col, row, palette::region(classes[row * grid.width + col]));
  }
  if (points) draw_points(img, grid, points->inputs, &points->labels, 1);
  if (adversarial) draw_points(img, grid, *adversarial, nullptr, 1, palette::kAdversarial);
  return img;
}

inline void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
}

inline void boundary_plot(const Network& net, const Dataset& points, const PlotGrid& grid,
                          const std::filesystem::path& out_path, const Tensor2* adversarial = nullptr) {
  write_ppm(out_path, render_boundary(net, grid, &points, adversarial));
}

// ---------------------------------------------------------------------------
// Trade-off sweeps

struct SweepRow {
  double beta = 0.0;
  double beta_mem = 0.0;
  double clean = 0.0;
  double robust = 0.0;
};

/// One full training run per (beta, beta_mem) pair; clean and robust are the
/// test metrics of the early-stopped network. beta_mem fills every memory slot.
inline std::vector<SweepRow> beta_sweep(const TrainConfig& base, const Dataset& train_ds, const Dataset& test_ds,
                                        const std::vector<double>& betas, const std::vector<double>& beta_mems) {
  if (betas.empty() || beta_mems.empty()) throw ConfigError("sweep grids must be non-empty", "sweep");
  std::vector<SweepRow> rows;
  for (double b : betas) {
    for (double bm : beta_mems) {
      TrainConfig cfg = base;
      cfg.loss.beta = b;
      cfg.loss.beta_mem.assign(cfg.loss.K, bm);
      auto res = train(train_ds, test_ds, cfg);
      const auto& best = res.final.history.at(res.final.best_epoch - 1);
      rows.push_back({b, bm, best.clean_acc, best.robust_acc});
    }
  }
  return rows;
}

inline void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os.precision(17);
  os << "beta,beta_mem,clean,robust\n";
  for (const auto& r : rows) os << r.beta << ',' << r.beta_mem << ',' << r.clean << ',' << r.robust << '\n';
}

/// Average ranks (1-based), ties sharing the mean rank.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

/// Spearman rank correlation; 0 when either side is constant.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ShapeError("spearman: need two equal-length series of length >= 2");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Robust accuracy of a (clean, robust) curve at a given clean accuracy:
/// piecewise-linear between the curve's points sorted by clean accuracy,
/// constant beyond its ends. Points sharing a clean value are averaged.
inline double robust_at_clean(std::vector<SweepRow> curve, double clean) {
  if (curve.empty()) throw ShapeError("robust_at_clean: empty curve");
  std::sort(curve.begin(), curve.end(), [](const auto& a, const auto& b) { return a.clean < b.clean; });
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < curve.size();) {
    std::size_t j = i;
    double s = 0.0;
    while (j < curve.size() && curve[j].clean == curve[i].clean) s += curve[j++].robust;
    pts.emplace_back(curve[i].clean, s / static_cast<double>(j - i));
    i = j;
  }
  if (clean <= pts.front().first) return pts.front().second;
  if (clean >= pts.back().first) return pts.back().second;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (clean <= pts[i].first) {
      const double t = (clean - pts[i - 1].first) / (pts[i].first - pts[i - 1].first);
      return pts[i - 1].second + t * (pts[i].second - pts[i - 1].second);
    }
  }
  return pts.back().second;
}

}  // namespace memlab
