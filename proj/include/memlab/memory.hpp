#pragma once

// Per-sample ring of the last K adversarial examples.
//
// Serialized as
//   memlab-bank 1
//   shape <n_samples> <K> <dim>
//   epochs <n_samples*K integers>     (-1 = clean fill)
//   values <n_samples*K*dim reals>    (hex-float, sample-major, oldest slot first)
//   end

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "memlab/error.hpp"
#include "memlab/io.hpp"
#include "memlab/tensor.hpp"

namespace memlab {

class MemoryBank {
 public:
  MemoryBank() = default;

  /// Every slot of every sample starts as that sample's clean input.
  static MemoryBank init_clean(const Tensor2& inputs, std::size_t K) {
    if (K == 0) throw ContractError("memory bank needs K >= 1");
    if (inputs.rows() == 0) throw DataError("memory bank: empty dataset");
    MemoryBank bank;
    bank.n_ = inputs.rows();
    bank.k_ = K;
    bank.dim_ = inputs.cols();
    bank.slots_.resize(bank.n_ * K * bank.dim_);
    bank.epoch_.assign(bank.n_ * K, -1);
    for (std::size_t i = 0; i < bank.n_; ++i) {
      auto x = inputs.row(i);
      for (std::size_t k = 0; k < K; ++k) std::copy(x.begin(), x.end(), bank.slot_ptr(i, k));
    }
    return bank;
  }

  std::size_t K() const noexcept { return k_; }
  std::size_t n_samples() const noexcept { return n_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const double> slot(std::size_t sample, std::size_t k) const {
    check_index(sample);
    if (k >= k_) throw ShapeError("memory bank: slot index out of range");
    return {slot_ptr(sample, k), dim_};
  }

  /// Epoch that wrote the slot, or -1 for the clean fill.
  long slot_epoch(std::size_t sample, std::size_t k) const { return epoch_.at(sample * k_ + k); }

  /// K tensors; row i of tensor k is slot k of sample_ids[i].
  std::vector<Tensor2> fetch(std::span<const std::size_t> sample_ids) const {
    std::vector<Tensor2> out(k_, Tensor2(sample_ids.size(), dim_));
    for (std::size_t i = 0; i < sample_ids.size(); ++i) {
      check_index(sample_ids[i]);
      for (std::size_t k = 0; k < k_; ++k) {
        const double* src = slot_ptr(sample_ids[i], k);
        std::copy(src, src + dim_, out[k].row(i).begin());
      }
    }
    return out;
  }

  /// For each listed sample: drop the oldest slot, shift the rest down, and
  /// store the matching row of x_adv as the newest slot.
  void push(std::span<const std::size_t> sample_ids, const Tensor2& x_adv, long epoch = -1) {
    if (x_adv.rows() != sample_ids.size() || x_adv.cols() != dim_) {
      throw ShapeError("memory push: expected " + std::to_string(sample_ids.size()) + "x" + std::to_string(dim_) +
                       " rows, got " + std::to_string(x_adv.rows()) + "x" + std::to_string(x_adv.cols()));
    }
    for (std::size_t i = 0; i < sample_ids.size(); ++i) check_index(sample_ids[i]);
    for (std::size_t i = 0; i < sample_ids.size(); ++i) {
      const std::size_t s = sample_ids[i];
      for (std::size_t k = 0; k + 1 < k_; ++k) {
        std::copy(slot_ptr(s, k + 1), slot_ptr(s, k + 1) + dim_, slot_ptr(s, k));
        epoch_[s * k_ + k] = epoch_[s * k_ + k + 1];
      }
      auto row = x_adv.row(i);
      std::copy(row.begin(), row.end(), slot_ptr(s, k_ - 1));
      epoch_[s * k_ + k_ - 1] = epoch;
    }
  }

  void save(std::ostream& os) const {
    os << "memlab-bank 1\nshape " << n_ << ' ' << k_ << ' ' << dim_ << "\nepochs";
    for (long e : epoch_) os << ' ' << e;
    os << "\nvalues";
    io::write_reals(os, slots_);
    os << "\nend\n";
  }

  static MemoryBank load(std::istream& is) {
    io::expect_token(is, "memlab-bank");
    if (io::next_token(is, "version") != "1") throw DataError("memory bank: unsupported format version");
    io::expect_token(is, "shape");
    MemoryBank b;
    b.n_ = io::parse_count(io::next_token(is, "n_samples"));
    b.k_ = io::parse_count(io::next_token(is, "K"));
    b.dim_ = io::parse_count(io::next_token(is, "dim"));
    if (b.n_ == 0 || b.k_ == 0 || b.dim_ == 0 || b.n_ * b.k_ * b.dim_ > (std::size_t{1} << 32)) {
      throw DataError("memory bank: bad shape");
    }
    io::expect_token(is, "epochs");
    b.epoch_.resize(b.n_ * b.k_);
    for (long& e : b.epoch_) {
      auto tok = io::next_token(is, "epoch tag");
      try {
        std::size_t used = 0;
        e = std::stol(tok, &used);
        if (used != tok.size()) throw DataError("");
      } catch (...) {
        throw DataError("memory bank: bad epoch tag '" + tok + "'");
      }
    }
    io::expect_token(is, "values");
    b.slots_.resize(b.n_ * b.k_ * b.dim_);
    io::read_reals(is, b.slots_);
    io::expect_token(is, "end");
    return b;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + path.string());
    save(os);
  }

  static MemoryBank load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open memory bank " + path.string());
    return load(is);
  }

  friend bool operator==(const MemoryBank&, const MemoryBank&) = default;

 private:
  void check_index(std::size_t sample) const {
    if (sample >= n_) {
      throw ShapeError("memory bank: sample " + std::to_string(sample) + " out of range (n = " + std::to_string(n_) + ")");
    }
  }
  double* slot_ptr(std::size_t s, std::size_t k) { return slots_.data() + (s * k_ + k) * dim_; }
  const double* slot_ptr(std::size_t s, std::size_t k) const { return slots_.data() + (s * k_ + k) * dim_; }

  std::size_t n_ = 0;
  std::size_t k_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> slots_;
  std::vector<long> epoch_;
};

}  // namespace memlab
