#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "memlab/io.hpp"
#include "memlab/nn.hpp"
#include "support/fixtures.hpp"
#include "support/reference.hpp"

using namespace memlab;

namespace {

Network hand_242() {
  Layer l1{Tensor2(2, 4, {0.5, -0.2, 0.1, 0.7, -0.3, 0.8, -0.6, 0.2}), {0.1, 0.0, -0.05, 0.2}, Activation::ReLU};
  Layer l2{Tensor2(4, 2, {1.0, -1.0, 0.5, 0.3, -0.7, 0.2, 0.4, -0.6}), {0.05, -0.05}, Activation::Identity};
  return Network({l1, l2});
}

std::vector<double> fd_params(Network net, const Tensor2& x, const Tensor2& g_out, double h) {
  // Surrogate L = sum(g_out .* logits), whose logit gradient is g_out.
  auto f = [&] {
    auto m = ref::from(net);
    ref::Real s = 0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto z = ref::logits(m, ref::rows(x)[r]);
      for (std::size_t c = 0; c < z.size(); ++c) s += g_out(r, c) * z[c];
    }
    return s;
  };
  std::vector<double> out;
  for (auto& l : net.layers()) {
    for (double& w : l.weight.data()) out.push_back(ref::central_difference(w, h, f));
    for (double& b : l.bias) out.push_back(ref::central_difference(b, h, f));
  }
  return out;
}

}  // namespace

TEST(Forward, ZeroNetGivesHalfHalf) {
  Network net({Layer{Tensor2(3, 2), {0.0, 0.0}, Activation::Identity}});
  auto p = probabilities(net, fixtures::random_tensor(4, 3, 1));
  for (double v : p.data()) EXPECT_EQ(v, 0.5);
}

TEST(Forward, ZeroLogitsAreUniform) {
  Network net({Layer{Tensor2(2, 5), std::vector<double>(5, 0.0), Activation::Identity}});
  auto p = probabilities(net, Tensor2(1, 2, {0.3, 0.7}));
  for (double v : p.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Forward, HandComputed242) {
  auto p = probabilities(hand_242(), Tensor2(1, 2, {0.3, -0.1}));
  EXPECT_NEAR(p(0, 0), 0.73380222567800979, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.26619777432199021, 1e-15);
}

TEST(Forward, MatchesReferenceAndRowsSumToOne) {
  auto net = fixtures::random_network({3, 7, 5, 4}, 11);
  auto x = fixtures::random_tensor(9, 3, 12, -2, 2);
  auto p = probabilities(net, x);
  auto m = ref::from(net);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto want = ref::probs(m, ref::rows(x)[r]);
    ref::Real s = 0;
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_NEAR(p(r, c), want[c], 1e-14);
      EXPECT_GT(p(r, c), 0.0);
      EXPECT_LT(p(r, c), 1.0);
      s += p(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_EQ(probabilities(net, x), p);
}

TEST(Forward, ExtremeLogitsStayFinite) {
  Network net({Layer{Tensor2(1, 2, {1e6, -1e6}), {0.0, 0.0}, Activation::Identity}});
  auto p = probabilities(net, Tensor2(2, 1, {1.0, -1.0}));
  EXPECT_TRUE(p.all_finite());
  EXPECT_NEAR(p(0, 0) + p(0, 1), 1.0, 1e-12);
}

TEST(Forward, ShapeMismatchThrows) {
  EXPECT_THROW(forward(hand_242(), Tensor2(1, 3)), ShapeError);
}

TEST(Backward, ZeroGradOutGivesZeroGrads) {
  auto net = fixtures::random_network({2, 4, 3}, 3);
  auto x = fixtures::random_tensor(5, 2, 4);
  auto tr = forward(net, x);
  auto g = backward(net, tr, Tensor2(5, 3));
  for (double v : g.params.flatten()) EXPECT_EQ(v, 0.0);
  for (double v : g.inputs.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, SingleLinearLayerByHand) {
  // L = 0.5 * ||z - t||^2 with z = x W + b; dL/dz = delta = z - t; dL/dW = x^T delta; dL/db = delta.
  Network net({Layer{Tensor2(2, 2, {0.4, -0.3, 0.2, 0.9}), {0.1, -0.2}, Activation::Identity}});
  Tensor2 x(1, 2, {1.5, -0.5});
  const double z0 = 1.5 * 0.4 - 0.5 * 0.2 + 0.1;
  const double z1 = 1.5 * -0.3 - 0.5 * 0.9 - 0.2;
  const double d0 = z0 - 1.0, d1 = z1 - 0.0;
  auto tr = forward(net, x);
  auto g = backward(net, tr, Tensor2(1, 2, {d0, d1}));
  EXPECT_DOUBLE_EQ(g.params.weight[0](0, 0), 1.5 * d0);
  EXPECT_DOUBLE_EQ(g.params.weight[0](0, 1), 1.5 * d1);
  EXPECT_DOUBLE_EQ(g.params.weight[0](1, 0), -0.5 * d0);
  EXPECT_DOUBLE_EQ(g.params.weight[0](1, 1), -0.5 * d1);
  EXPECT_DOUBLE_EQ(g.params.bias[0][0], d0);
  EXPECT_DOUBLE_EQ(g.params.bias[0][1], d1);
}

TEST(Backward, LinearInputGradientIsWeightColumn) {
  Network net({Layer{Tensor2(3, 2, {0.4, -0.3, 0.2, 0.9, -1.1, 0.6}), {0.0, 0.0}, Activation::Identity}});
  auto tr = forward(net, Tensor2(1, 3, {0.1, 0.2, 0.3}));
  auto gx = backward_inputs(net, tr, Tensor2(1, 2, {1.0, 0.0}));
  EXPECT_EQ(gx(0, 0), 0.4);
  EXPECT_EQ(gx(0, 1), 0.2);
  EXPECT_EQ(gx(0, 2), -1.1);
}

TEST(Backward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto net = fixtures::random_network({3, 6, 5, 3}, seed);
    auto x = fixtures::random_tensor(4, 3, 100 + seed);
    auto g_out = fixtures::random_tensor(4, 3, 200 + seed);
    ref::KinkWatch watch;
    for (const auto& row : ref::rows(x)) ref::logits(ref::from(net), row, &watch);
    if (watch.min_abs_pre < 1e-4) continue;
    auto tr = forward(net, x);
    auto g = backward(net, tr, g_out);
    EXPECT_LT(ref::rel_error(g.params.flatten(), fd_params(net, x, g_out, 1e-6)), 1e-6) << "seed " << seed;

    std::vector<double> fd_x;
    auto m = ref::from(net);
    auto xs = ref::rows(x);
    for (std::size_t r = 0; r < xs.size(); ++r) {
      for (std::size_t c = 0; c < xs[r].size(); ++c) {
        fd_x.push_back(ref::central_difference(xs[r][c], 1e-6, [&] {
          auto z = ref::logits(m, xs[r]);
          ref::Real s = 0;
          for (std::size_t k = 0; k < z.size(); ++k) s += g_out(r, k) * z[k];
          return s;
        }));
      }
    }
    EXPECT_LT(ref::rel_error(g.inputs.data(), fd_x), 1e-6) << "seed " << seed;
  }
}

TEST(Backward, StaleTraceIsRejected) {
  auto net = fixtures::random_network({2, 3, 2}, 5);
  auto tr = forward(net, fixtures::random_tensor(2, 2, 6));
  net.layers()[0].weight(0, 0) += 0.1;
  EXPECT_THROW(backward(net, tr, Tensor2(2, 2)), ContractError);
  auto other = fixtures::random_network({2, 4, 2}, 5);
  EXPECT_THROW(backward_params(other, tr, Tensor2(2, 2)), ContractError);
}

TEST(Predict, ArgmaxWithLowestIndexTieBreak) {
  Tensor2 p(3, 3, {0.9, 0.05, 0.05, 0.25, 0.5, 0.25, 0.4, 0.2, 0.4});
  EXPECT_EQ(argmax_rows(p), (Labels{0, 1, 0}));
  EXPECT_EQ(argmax_rows(Tensor2(1, 2, {0.5, 0.5})), (Labels{0}));
  EXPECT_EQ(argmax_rows(Tensor2(1, 2, {0.1, 0.9})), (Labels{1}));
}

TEST(Predict, RowwiseArgmaxOfProbabilities) {
  auto net = fixtures::random_network({2, 5, 4}, 8);
  auto x = fixtures::random_tensor(3, 2, 9, -3, 3);
  auto labels = predict(net, x);
  ASSERT_EQ(labels.size(), 3u);
  auto m = ref::from(net);
  for (std::size_t r = 0; r < 3; ++r) {
    auto p = ref::probs(m, ref::rows(x)[r]);
    int best = 0;
    for (int c = 1; c < 4; ++c) {
      if (p[c] > p[best]) best = c;
    }
    EXPECT_EQ(labels[r], best);
  }
}

TEST(Binary, TwoClassSoftmaxCeEqualsSigmoidBce) {
  auto net = fixtures::random_network({2, 4, 2}, 21);
  auto x = fixtures::random_tensor(6, 2, 22);
  auto tr = forward(net, x);
  for (std::size_t r = 0; r < 6; ++r) {
    const double d = tr.pre.back()(r, 1) - tr.pre.back()(r, 0);
    const double sig = 1.0 / (1.0 + std::exp(-d));
    EXPECT_NEAR(-std::log(tr.probs(r, 1)), -std::log(sig), 1e-13);
    EXPECT_NEAR(-std::log(tr.probs(r, 0)), -std::log(1.0 - sig), 1e-13);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto net = fixtures::random_network({2, 20, 20, 2}, 31);
  net.layers()[0].weight(0, 0) = 1.0 / 3.0;
  net.layers()[1].bias[3] = -0.0;
  std::stringstream ss;
  save_network(ss, net);
  auto back = load_network(ss);
  EXPECT_EQ(back, net);
  EXPECT_EQ(back.fingerprint(), net.fingerprint());
  EXPECT_TRUE(std::signbit(back.layers()[1].bias[3]));
}

TEST(Checkpoint, CorruptInputThrowsDataError) {
  std::stringstream bad1("memlab-network 2\nlayers 1\n");
  EXPECT_THROW(load_network(bad1), DataError);
  std::stringstream ss;
  save_network(ss, fixtures::random_network({2, 3, 2}, 1));
  std::string text = ss.str();
  std::stringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(load_network(truncated), DataError);
  std::stringstream garbage("hello");
  EXPECT_THROW(load_network(garbage), DataError);
}
