#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "memlab/error.hpp"
#include "memlab/random.hpp"
#include "memlab/tensor.hpp"

namespace memlab {

/// Logits are clamped to [-kLogitClamp, kLogitClamp] before the softmax head.
inline constexpr double kLogitClamp = 50.0;
/// Probability floor used inside every log.
inline constexpr double kProbFloor = 1e-12;

enum class Activation { ReLU, Identity };

inline const char* to_string(Activation a) { return a == Activation::ReLU ? "relu" : "identity"; }

/// Dense layer computing act(x W + b); W is (fan_in x fan_out).
struct Layer {
  Tensor2 weight;
  std::vector<double> bias;
  Activation act = Activation::Identity;

  std::size_t fan_in() const { return weight.rows(); }
  std::size_t fan_out() const { return weight.cols(); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Feed-forward dense network with a softmax head over the last layer's outputs.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

  /// Layer widths `dims` (input, hidden..., classes); hidden layers use `hidden`,
  /// the output layer is linear. Weights are uniform in +-sqrt(6/(fan_in+fan_out)),
  /// biases zero.
  static Network create(const std::vector<std::size_t>& dims, std::uint64_t seed,
                        Activation hidden = Activation::ReLU) {
    if (dims.size() < 2) throw ConfigError("network needs at least input and output widths", "model");
    std::vector<Layer> layers;
    Rng rng = make_rng(derive_key(seed, Stream::Init));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      Layer layer;
      layer.weight = Tensor2(dims[l], dims[l + 1]);
      double limit = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
      for (double& w : layer.weight.data()) w = limit * unit(rng);
      layer.bias.assign(dims[l + 1], 0.0);
      layer.act = (l + 2 == dims.size()) ? Activation::Identity : hidden;
      layers.push_back(std::move(layer));
    }
    return Network(std::move(layers));
  }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().fan_in(); }
  std::size_t num_classes() const { return layers_.empty() ? 0 : layers_.back().fan_out(); }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Throws ShapeError if the chain of layer widths is broken or C < 2.
  void validate() const {
    if (layers_.empty()) throw ShapeError("network has no layers");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.bias.size() != layer.fan_out()) throw ShapeError("layer " + std::to_string(l) + ": bias width");
      if (l > 0 && layers_[l - 1].fan_out() != layer.fan_in())
        throw ShapeError("layer " + std::to_string(l) + ": input width does not chain");
    }
    if (num_classes() < 2) throw ShapeError("network needs at least 2 output classes");
  }

  /// FNV-1a over shapes and parameter bytes; identifies a parameter state.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, std::size_t n) {
      auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
      }
    };
    for (const auto& l : layers_) {
      std::size_t shape[2] = {l.fan_in(), l.fan_out()};
      mix(shape, sizeof(shape));
      mix(l.weight.data().data(), l.weight.size() * sizeof(double));
      mix(l.bias.data(), l.bias.size() * sizeof(double));
    }
    return h;
  }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::vector<Layer> layers_;
};

/// Gradients with the same layout as a Network's parameters.
struct ParamGrads {
  std::vector<Tensor2> weight;
  std::vector<std::vector<double>> bias;

  static ParamGrads zeros_like(const Network& net) {
    ParamGrads g;
    for (const auto& l : net.layers()) {
      g.weight.emplace_back(l.fan_in(), l.fan_out());
      g.bias.emplace_back(l.fan_out(), 0.0);
    }
    return g;
  }

  ParamGrads& operator+=(const ParamGrads& o) {
    if (o.weight.size() != weight.size()) throw ShapeError("ParamGrads: layer count mismatch");
    for (std::size_t l = 0; l < weight.size(); ++l) {
      require_same_shape(weight[l], o.weight[l], "ParamGrads");
      auto& w = weight[l].data();
      const auto& ow = o.weight[l].data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += ow[i];
      for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += o.bias[l][i];
    }
    return *this;
  }

  /// Flattened in layer order: weights row-major, then bias.
  std::vector<double> flatten() const {
    std::vector<double> out;
    for (std::size_t l = 0; l < weight.size(); ++l) {
      out.insert(out.end(), weight[l].data().begin(), weight[l].data().end());
      out.insert(out.end(), bias[l].begin(), bias[l].end());
    }
    return out;
  }
};

/// Cached intermediates of one forward pass.
struct ForwardTrace {
  Tensor2 input;
  std::vector<Tensor2> pre;   // per layer, before activation; pre.back() holds raw logits
  std::vector<Tensor2> post;  // per layer, after activation
  Tensor2 probs;
  std::uint64_t param_tag = 0;
};

namespace detail {

inline void affine(const Tensor2& in, const Layer& layer, Tensor2& out) {
  const std::size_t n_in = layer.fan_in();
  const std::size_t n_out = layer.fan_out();
  out = Tensor2(in.rows(), n_out);
  for (std::size_t r = 0; r < in.rows(); ++r) {
    auto o = out.row(r);
    std::copy(layer.bias.begin(), layer.bias.end(), o.begin());
    auto x = in.row(r);
    for (std::size_t i = 0; i < n_in; ++i) {
      const double xi = x[i];
      const double* w = layer.weight.data().data() + i * n_out;
      for (std::size_t j = 0; j < n_out; ++j) o[j] += xi * w[j];
    }
  }
}

inline void softmax_rows(const Tensor2& logits, Tensor2& probs) {
  probs = Tensor2(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    auto p = probs.row(r);
    double zmax = -kLogitClamp;
    for (double v : z) zmax = std::max(zmax, std::clamp(v, -kLogitClamp, kLogitClamp));
    double total = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      p[c] = std::exp(std::clamp(z[c], -kLogitClamp, kLogitClamp) - zmax);
      total += p[c];
    }
    for (double& v : p) v /= total;
  }
}

}  // namespace detail

/// Forward pass; the returned trace carries the softmax output in `probs`.
inline ForwardTrace forward(const Network& net, const Tensor2& batch) {
  if (batch.cols() != net.input_dim()) {
    throw ShapeError("forward: batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                     std::to_string(net.input_dim()));
  }
  ForwardTrace tr;
  tr.input = batch;
  tr.param_tag = net.fingerprint();
  const Tensor2* cur = &tr.input;
  for (const auto& layer : net.layers()) {
    Tensor2 z;
    detail::affine(*cur, layer, z);
    Tensor2 a = z;
    if (layer.act == Activation::ReLU) {
      for (double& v : a.data()) v = v > 0.0 ? v : 0.0;
    }
    tr.pre.push_back(std::move(z));
    tr.post.push_back(std::move(a));
    cur = &tr.post.back();
  }
  detail::softmax_rows(tr.post.back(), tr.probs);
  return tr;
}

inline Tensor2 probabilities(const Network& net, const Tensor2& batch) { return forward(net, batch).probs; }

/// Logits as seen by the softmax head (after clamping).
inline Tensor2 clamped_logits(const ForwardTrace& tr) {
  Tensor2 z = tr.post.back();
  for (double& v : z.data()) v = std::clamp(v, -kLogitClamp, kLogitClamp);
  return z;
}

struct Gradients {
  ParamGrads params;
  Tensor2 inputs;
};

namespace detail {

inline void check_trace(const Network& net, const ForwardTrace& tr, const Tensor2& grad_logits) {
  if (tr.pre.size() != net.layers().size() || tr.param_tag != net.fingerprint()) {
    throw ContractError("backward: trace was not produced by this network state");
  }
  require_same_shape(grad_logits, tr.post.back(), "backward: grad_logits");
}

inline Gradients backward_impl(const Network& net, const ForwardTrace& tr, const Tensor2& grad_logits,
                               bool want_params, bool want_inputs) {
  check_trace(net, tr, grad_logits);
  const auto& layers = net.layers();
  Gradients g;
  if (want_params) g.params = ParamGrads::zeros_like(net);

  Tensor2 delta = grad_logits;
  const auto& raw = tr.pre.back();
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (std::abs(raw.data()[i]) > kLogitClamp) delta.data()[i] = 0.0;
  }

  for (std::size_t l = layers.size(); l-- > 0;) {
    const Layer& layer = layers[l];
    const Tensor2& in = l == 0 ? tr.input : tr.post[l - 1];
    const std::size_t n_in = layer.fan_in();
    const std::size_t n_out = layer.fan_out();
    if (want_params) {
      auto& dw = g.params.weight[l];
      auto& db = g.params.bias[l];
      for (std::size_t r = 0; r < delta.rows(); ++r) {
        auto d = delta.row(r);
        auto x = in.row(r);
        for (std::size_t i = 0; i < n_in; ++i) {
          double* w = dw.data().data() + i * n_out;
          for (std::size_t j = 0; j < n_out; ++j) w[j] += x[i] * d[j];
        }
        for (std::size_t j = 0; j < n_out; ++j) db[j] += d[j];
      }
    }
    if (l == 0 && !want_inputs) break;
    Tensor2 prev(delta.rows(), n_in);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      auto d = delta.row(r);
      auto p = prev.row(r);
      for (std::size_t i = 0; i < n_in; ++i) {
        const double* w = layer.weight.data().data() + i * n_out;
        double acc = 0.0;
        for (std::size_t j = 0; j < n_out; ++j) acc += w[j] * d[j];
        p[i] = acc;
      }
    }
    if (l > 0 && layers[l - 1].act == Activation::ReLU) {
      const auto& z = tr.pre[l - 1];
      for (std::size_t i = 0; i < prev.size(); ++i) {
        if (!(z.data()[i] > 0.0)) prev.data()[i] = 0.0;
      }
    }
    delta = std::move(prev);
  }
  if (want_inputs) g.inputs = std::move(delta);
  return g;
}

}  // namespace detail

/// Backpropagates `grad_logits` (dL/d logits, one row per sample) to the parameters.
inline ParamGrads backward_params(const Network& net, const ForwardTrace& tr, const Tensor2& grad_logits) {
  return detail::backward_impl(net, tr, grad_logits, true, false).params;
}

/// Backpropagates `grad_logits` to the batch inputs; result has the batch's shape.
inline Tensor2 backward_inputs(const Network& net, const ForwardTrace& tr, const Tensor2& grad_logits) {
  return detail::backward_impl(net, tr, grad_logits, false, true).inputs;
}

inline Gradients backward(const Network& net, const ForwardTrace& tr, const Tensor2& grad_logits) {
  return detail::backward_impl(net, tr, grad_logits, true, true);
}

/// Row-wise argmax; ties go to the lowest class index.
inline Labels argmax_rows(const Tensor2& probs) {
  Labels out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto p = probs.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.size(); ++c) {
      if (p[c] > p[best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

inline Labels predict(const Network& net, const Tensor2& batch) { return argmax_rows(probabilities(net, batch)); }

inline void check_labels(const Labels& y, std::size_t rows, std::size_t num_classes) {
  if (y.size() != rows) throw ShapeError("labels: " + std::to_string(y.size()) + " labels for " + std::to_string(rows) + " rows");
  for (int v : y) {
    if (v < 0 || static_cast<std::size_t>(v) >= num_classes)
      throw ShapeError("label " + std::to_string(v) + " out of range [0, " + std::to_string(num_classes) + ")");
  }
}

}  // namespace memlab
