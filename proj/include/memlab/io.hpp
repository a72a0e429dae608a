#pragma once

// Text checkpoint format. Every real is written as a C99 hex-float so a
// save/load cycle reproduces the exact bits.
//
//   memlab-network 1
//   layers <L>
//   layer <fan_in> <fan_out> <relu|identity>
//   W <fan_in*fan_out reals, row-major>
//   b <fan_out reals>
//   ... (one layer/W/b triple per layer)
//   end

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ios>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "memlab/error.hpp"
#include "memlab/nn.hpp"

namespace memlab {

namespace io {

inline void write_reals(std::ostream& os, std::span<const double> values) {
  std::ostringstream buf;
  buf << std::hexfloat;
  for (double v : values) buf << ' ' << v;
  os << buf.str();
}

inline std::string next_token(std::istream& is, const char* what) {
  std::string tok;
  if (!(is >> tok)) throw DataError(std::string("checkpoint truncated while reading ") + what);
  return tok;
}

inline void expect_token(std::istream& is, const std::string& want) {
  auto tok = next_token(is, want.c_str());
  if (tok != want) throw DataError("checkpoint: expected '" + want + "', found '" + tok + "'");
}

inline double parse_real(const std::string& tok) {
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw DataError("checkpoint: bad real '" + tok + "'");
  return v;
}

inline std::size_t parse_count(const std::string& tok) {
  char* end = nullptr;
  unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0' || tok.front() == '-') throw DataError("checkpoint: bad count '" + tok + "'");
  return static_cast<std::size_t>(v);
}

inline void read_reals(std::istream& is, std::span<double> out) {
  for (double& v : out) v = parse_real(next_token(is, "values"));
}

}  // namespace io

inline constexpr int kNetworkFormatVersion = 1;

inline void save_network(std::ostream& os, const Network& net) {
  os << "memlab-network " << kNetworkFormatVersion << "\n";
  os << "layers " << net.layers().size() << "\n";
  for (const auto& l : net.layers()) {
    os << "layer " << l.fan_in() << ' ' << l.fan_out() << ' ' << to_string(l.act) << "\nW";
    io::write_reals(os, l.weight.data());
    os << "\nb";
    io::write_reals(os, l.bias);
    os << "\n";
  }
  os << "end\n";
}

inline Network load_network(std::istream& is) {
  io::expect_token(is, "memlab-network");
  auto version = io::parse_count(io::next_token(is, "version"));
  if (version != kNetworkFormatVersion) throw DataError("checkpoint: unsupported network format version " + std::to_string(version));
  io::expect_token(is, "layers");
  auto n_layers = io::parse_count(io::next_token(is, "layer count"));
  if (n_layers == 0 || n_layers > 4096) throw DataError("checkpoint: implausible layer count");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < n_layers; ++l) {
    io::expect_token(is, "layer");
    auto fan_in = io::parse_count(io::next_token(is, "fan_in"));
    auto fan_out = io::parse_count(io::next_token(is, "fan_out"));
    auto act = io::next_token(is, "activation");
    Layer layer;
    if (act == "relu") {
      layer.act = Activation::ReLU;
    } else if (act == "identity") {
      layer.act = Activation::Identity;
    } else {
      throw DataError("checkpoint: unknown activation '" + act + "'");
    }
    if (fan_in == 0 || fan_out == 0 || fan_in * fan_out > (std::size_t{1} << 28)) throw DataError("checkpoint: bad layer shape");
    layer.weight = Tensor2(fan_in, fan_out);
    layer.bias.assign(fan_out, 0.0);
    io::expect_token(is, "W");
    io::read_reals(is, layer.weight.data());
    io::expect_token(is, "b");
    io::read_reals(is, layer.bias);
    layers.push_back(std::move(layer));
  }
  io::expect_token(is, "end");
  try {
    return Network(std::move(layers));
  } catch (const ShapeError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_network(const std::filesystem::path& path, const Network& net) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  save_network(os, net);
  if (!os) throw DataError("write failed for " + path.string());
}

inline Network load_network(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  return load_network(is);
}

}  // namespace memlab
