#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "memlab/nn.hpp"
#include "memlab/random.hpp"
#include "memlab/tensor.hpp"

namespace fixtures {

/// Seeded network with non-zero biases (library init leaves them at zero).
inline memlab::Network random_network(const std::vector<std::size_t>& dims, std::uint64_t seed, double bias_scale = 0.3) {
  auto net = memlab::Network::create(dims, seed);
  std::mt19937_64 rng(seed * 7919 + 17);
  std::uniform_real_distribution<double> u(-bias_scale, bias_scale);
  for (auto& l : net.layers()) {
    for (double& b : l.bias) b = u(rng);
  }
  return net;
}

inline memlab::Tensor2 random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                                     double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  memlab::Tensor2 t(rows, cols);
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline memlab::Labels random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  memlab::Labels y(n);
  for (int& v : y) v = static_cast<int>(rng() % classes);
  return y;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("memlab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
