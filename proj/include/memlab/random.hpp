#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace memlab {

using Rng = std::mt19937_64;

/// Named random streams. Every random draw in a run comes from one seed mixed
/// with one of these tags, so changing one consumer never shifts another.
enum class Stream : std::uint64_t {
  Init = 1,
  Shuffle = 2,
  TrainAttack = 3,
  EvalAttack = 4,
  DataTrain = 5,
  DataTest = 6,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds a list of integers into one well-mixed 64-bit key.
inline std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

inline std::uint64_t derive_key(std::uint64_t seed, Stream s) {
  return derive_key({seed, static_cast<std::uint64_t>(s)});
}

inline Rng make_rng(std::uint64_t key) { return Rng(key); }

}  // namespace memlab
