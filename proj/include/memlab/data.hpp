#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "memlab/error.hpp"
#include "memlab/random.hpp"
#include "memlab/tensor.hpp"

namespace memlab {

enum class Split { Train, Test };

/// Samples with integer labels in [0, num_classes). Sample i has stable id i;
/// the memory bank is keyed by it.
struct Dataset {
  Tensor2 inputs;
  Labels labels;
  std::size_t num_classes = 2;
  Split split = Split::Train;

  std::size_t size() const noexcept { return inputs.rows(); }
  std::size_t dim() const noexcept { return inputs.cols(); }

  void validate() const {
    if (labels.size() != inputs.rows()) throw DataError("dataset: label count does not match row count");
    if (num_classes < 2) throw DataError("dataset: need at least 2 classes");
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw DataError("dataset: label out of range");
    }
  }
};

enum class ToyGenerator { TwoGaussians, TwoMoons };

struct ToySpec {
  ToyGenerator generator = ToyGenerator::TwoGaussians;
  std::size_t n_per_class = 500;
  double noise_std = 0.45;
  std::uint64_t seed = 0;
};

/// Balanced 2-D, 2-class toy data; class 0 rows come first.
///  TwoGaussians: isotropic clusters at (-1, 0) and (+1, 0).
///  TwoMoons: interleaved half circles on evenly spaced angles, plus noise.
inline Dataset generate_toy(const ToySpec& spec, Split split = Split::Train) {
  if (spec.n_per_class < 1) throw ConfigError("n_per_class must be >= 1", "n_per_class");
  if (!(spec.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0", "noise_std");
  Dataset ds;
  ds.split = split;
  ds.num_classes = 2;
  const std::size_t n = 2 * spec.n_per_class;
  ds.inputs = Tensor2(n, 2);
  ds.labels.resize(n);
  Rng rng = make_rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = i < spec.n_per_class ? 0 : 1;
    const std::size_t j = i % spec.n_per_class;
    double cx = 0.0;
    double cy = 0.0;
    if (spec.generator == ToyGenerator::TwoGaussians) {
      cx = cls == 0 ? -1.0 : 1.0;
    } else {
      double t = spec.n_per_class > 1 ? std::numbers::pi * static_cast<double>(j) / static_cast<double>(spec.n_per_class - 1) : 0.0;
      if (cls == 0) {
        cx = std::cos(t);
        cy = std::sin(t);
      } else {
        cx = 1.0 - std::cos(t);
        cy = 0.5 - std::sin(t);
      }
    }
    double nx = normal(rng);
    double ny = normal(rng);
    ds.inputs(i, 0) = cx + spec.noise_std * nx;
    ds.inputs(i, 1) = cy + spec.noise_std * ny;
    ds.labels[i] = cls;
  }
  return ds;
}

/// CSV layout: header row required, comma separated, '.' decimal point. The
/// label column is found by name; every other column is a feature.
struct CsvSchema {
  std::string label_column = "label";
  std::size_t num_classes = 0;  // 0: infer as max label + 1
  /// When set, features are mapped from [lo, hi] onto [0, 1]; values outside are rejected.
  std::optional<std::pair<double, double>> feature_range;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  for (auto& c : cells) {
    auto b = c.find_first_not_of(" \t\r");
    auto e = c.find_last_not_of(" \t\r");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

}  // namespace detail

inline Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema, Split split = Split::Train) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.find_first_not_of(" \t\r") == std::string::npos) {
    throw DataError(path.string() + ": empty file (a header row is required)");
  }
  const auto header = detail::split_csv_line(line);
  std::size_t label_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == schema.label_column) label_col = c;
  }
  if (label_col == header.size()) throw DataError(path.string() + ": no '" + schema.label_column + "' column in header");
  if (header.size() < 2) throw DataError(path.string() + ": need at least one feature column");
  if (schema.feature_range && !(schema.feature_range->first < schema.feature_range->second)) {
    throw ConfigError("feature_range needs lo < hi", "feature_range");
  }

  std::vector<double> values;
  Labels labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    const std::string where = path.string() + ": row " + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || *end != '\0' || !std::isfinite(v)) {
        throw DataError(where + ", column '" + header[c] + "': non-numeric value '" + cell + "'");
      }
      if (c == label_col) {
        if (v != std::floor(v) || v < 0 || (schema.num_classes && v >= static_cast<double>(schema.num_classes))) {
          throw DataError(where + ": label '" + cell + "' out of range");
        }
        labels.push_back(static_cast<int>(v));
      } else {
        if (schema.feature_range) {
          auto [lo, hi] = *schema.feature_range;
          if (v < lo || v > hi) throw DataError(where + ", column '" + header[c] + "': value outside feature range");
          v = (v - lo) / (hi - lo);
        }
        values.push_back(v);
      }
    }
  }
  if (labels.empty()) throw DataError(path.string() + ": no data rows");

  Dataset ds;
  ds.split = split;
  ds.inputs = Tensor2(labels.size(), header.size() - 1, std::move(values));
  ds.labels = std::move(labels);
  int max_label = 0;
  for (int y : ds.labels) max_label = std::max(max_label, y);
  ds.num_classes = schema.num_classes ? schema.num_classes : std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);
  ds.validate();
  return ds;
}

struct Batch {
  std::vector<std::size_t> ids;
  Tensor2 inputs;
  Labels labels;
};

/// Permutation of [0, n) determined by (seed, epoch).
inline std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_rng(derive_key({seed, static_cast<std::uint64_t>(Stream::Shuffle), epoch}));
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

/// Mini-batches covering every sample exactly once; the last one may be short.
inline std::vector<Batch> batch_iter(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1", "train.batch_size");
  const auto order = epoch_permutation(ds.size(), seed, epoch);
  std::vector<Batch> out;
  for (std::size_t b = 0; b < order.size(); b += batch_size) {
    Batch batch;
    batch.ids.assign(order.begin() + static_cast<std::ptrdiff_t>(b),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + batch_size)));
    batch.inputs = gather_rows(ds.inputs, batch.ids);
    for (auto id : batch.ids) batch.labels.push_back(ds.labels[id]);
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace memlab
