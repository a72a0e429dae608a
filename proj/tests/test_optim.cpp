#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "memlab/optim.hpp"

using namespace memlab;

TEST(Schedule, ConstantIgnoresStep) {
  ScheduleConfig c{Schedule::Constant, 0.005, 0.3};
  for (std::size_t s : {0, 5, 99}) EXPECT_EQ(lr_at(c, s, 100), 0.005);
}

TEST(Schedule, OneCycleRampsThenAnneals) {
  ScheduleConfig c{Schedule::OneCycleCosine, 0.2, 0.3};
  const std::size_t total = 101;  // warmup W = round(30.3) = 30
  EXPECT_EQ(lr_at(c, 0, total), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(c, 15, total), 0.1);
  EXPECT_EQ(lr_at(c, 30, total), 0.2);
  // Cosine from step 30 to step 100: halfway at step 65.
  EXPECT_NEAR(lr_at(c, 65, total), 0.1, 1e-15);
  EXPECT_NEAR(lr_at(c, 100, total), 0.0, 1e-15);
  EXPECT_NEAR(lr_at(c, 47, total), 0.2 * 0.5 * (1 + std::cos(std::numbers::pi * 17.0 / 70.0)), 1e-15);
  double prev = 1;
  for (std::size_t s = 30; s < total; ++s) {
    EXPECT_LE(lr_at(c, s, total), prev);
    prev = lr_at(c, s, total);
  }
  EXPECT_THROW(lr_at(c, total, total), ContractError);
}

TEST(Schedule, NoWarmup) {
  ScheduleConfig c{Schedule::OneCycleCosine, 1.0, 0.0};
  EXPECT_EQ(lr_at(c, 0, 10), 1.0);
  EXPECT_NEAR(lr_at(c, 9, 10), 0.0, 1e-15);
  EXPECT_EQ(lr_at(c, 0, 1), 1.0);
}

TEST(Sgd, TwoNesterovStepsByHand) {
  Network net({Layer{Tensor2(1, 2, {1.0, -2.0}), {0.5, 0.0}, Activation::Identity}});
  auto state = SgdState::for_network(net);
  SgdConfig cfg{0.9, true, 0.1};
  ParamGrads g = ParamGrads::zeros_like(net);
  g.weight[0](0, 0) = 0.2;
  g.bias[0][0] = -1.0;
  const double lr = 0.5;

  // Weight (0,0): theta = 1, g = 0.2.
  double theta = 1.0, v = 0.0;
  double b = 0.5, vb = 0.0;
  auto step = [&](double& t, double& vel, double grad) {
    double gd = grad + 0.1 * t;
    vel = 0.9 * vel + gd;
    t -= lr * (gd + 0.9 * vel);
  };
  for (int i = 0; i < 2; ++i) {
    sgd_step(net, state, g, lr, cfg);
    step(theta, v, 0.2);
    step(b, vb, -1.0);
  }
  // By hand: step 1 gd = 0.3, v = 0.3, theta = 1 - 0.5 * 0.57 = 0.715;
  // step 2 gd = 0.2715, v = 0.5415, theta = 0.715 - 0.5 * (0.2715 + 0.48735) = 0.335575.
  EXPECT_NEAR(theta, 0.335575, 1e-15);
  EXPECT_DOUBLE_EQ(net.layers()[0].weight(0, 0), theta);
  EXPECT_DOUBLE_EQ(net.layers()[0].bias[0], b);
  EXPECT_DOUBLE_EQ(state.velocity.weight[0](0, 0), v);
}

TEST(Sgd, PlainMomentumAndZeroLr) {
  Network net({Layer{Tensor2(1, 1, {2.0}), {0.0}, Activation::Identity}, Layer{Tensor2(1, 2, {1.0, 1.0}), {0.0, 0.0}, Activation::Identity}});
  auto state = SgdState::for_network(net);
  ParamGrads g = ParamGrads::zeros_like(net);
  g.weight[0](0, 0) = 1.0;
  sgd_step(net, state, g, 0.1, SgdConfig{0.5, false, 0.0});
  EXPECT_DOUBLE_EQ(net.layers()[0].weight(0, 0), 1.9);
  sgd_step(net, state, g, 0.1, SgdConfig{0.5, false, 0.0});
  EXPECT_DOUBLE_EQ(net.layers()[0].weight(0, 0), 1.9 - 0.1 * 1.5);
  auto before = net;
  sgd_step(net, state, g, 0.0, SgdConfig{0.5, false, 0.0});
  EXPECT_EQ(net, before);
}
