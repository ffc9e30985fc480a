#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "ttvi/optim.hpp"
#include "ttvi/training.hpp"

namespace ttvi {
namespace {

using testing::tiny_arch;

std::vector<TrainSequence> tiny_train_set(std::size_t n) {
  std::vector<TrainSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    synth::SequenceSpec s;
    s.grid = {8, 8, 8};
    s.n_frames = 5;
    s.seed = 40 + i;
    out.push_back(synth::generate_sequence(s).frames);
  }
  return out;
}

TrainConfig tiny_train(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.lr = 1e-2;
  c.mask_patch = {4, 4, 4};
  c.seed = 5;
  return c;
}

TEST(CollectGradients, KeepsOnlyTrainableReachedTensors) {
  const auto p = init_params<double>(tiny_arch(), 1);
  ag::Graph<double> g;
  const auto bound = bind(g, p, {true, false, true, false});
  const auto f0 = bound.ids[p.index_of("f.conv1.weight")];
  const auto loss = ag::sum(g, ag::mul(g, f0, f0));
  const auto grads = collect_gradients(g.backward(loss), bound);
  ASSERT_EQ(grads.size(), 1u);
  EXPECT_EQ(grads[0].index, p.index_of("f.conv1.weight"));
}

TEST(Adam, FirstStepMovesEachCoordinateByLr) {
  auto p = init_params<double>(tiny_arch(), 2);
  const auto before = p;
  const std::size_t k = p.index_of("g_rot.fc1.weight");
  GradMap<double> g{{k, Tensor<double>(p.value(k).shape(), 0.0)}};
  for (std::size_t i = 0; i < g[0].grad.size(); ++i) g[0].grad[i] = (i % 3 == 0 ? -1.0 : 2.5) * (1 + i);
  Adam<double> opt(p, AdamOptions{.lr = 0.01});
  opt.step(p, g);
  EXPECT_EQ(opt.steps(), 1u);
  for (std::size_t i = 0; i < g[0].grad.size(); ++i) {
    const double expected = before.value(k)[i] - 0.01 * (g[0].grad[i] > 0 ? 1 : -1);
    EXPECT_NEAR(p.value(k)[i], expected, 1e-8);
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i != k) {
      EXPECT_EQ(p.value(i), before.value(i));
    }
  }
}

TEST(Adam, MinimizesAQuadratic) {
  auto p = init_params<double>(tiny_arch(), 3);
  const std::size_t k = p.index_of("f.conv1.bias");
  Adam<double> opt(p, AdamOptions{.lr = 0.05});
  p.value(k).fill(3.0);
  for (int it = 0; it < 500; ++it) {
    GradMap<double> g{{k, p.value(k)}};  // d/dx x^2/2
    opt.step(p, g);
  }
  for (double v : p.value(k).data()) EXPECT_LT(std::abs(v), 0.05);
}

TEST(TrainConfig, Validation) {
  auto c = tiny_train(1);
  c.lr = -1;
  EXPECT_THROW(c.validate(), DomainError);
  c = tiny_train(1);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), DomainError);
  c = tiny_train(1);
  c.interpolation = c.rotation = c.mae = false;
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(JointStep, LossIsTheWeightedSumAndGradientsCoverEveryHead) {
  const auto p = init_params<float>(tiny_arch(), 4);
  const auto data = tiny_train_set(1);
  auto cfg = tiny_train(1);
  cfg.aux_weight = 0.5;
  GradMap<float> grads;
  const auto l = joint_step(p, data[0], 2, cfg, 9, grads);
  EXPECT_NEAR(l.total, l.interpolation + 0.5 * (l.rotation + l.mae), 1e-6);
  std::array<bool, 4> seen{};
  for (const auto& e : grads) seen[static_cast<std::size_t>(p[e.index].partition)] = true;
  EXPECT_TRUE(seen[0] && seen[1] && seen[2] && seen[3]);
}

TEST(JointStep, DisabledObjectivesContributeNothing) {
  const auto p = init_params<float>(tiny_arch(), 5);
  const auto data = tiny_train_set(1);
  auto cfg = tiny_train(1);
  cfg.rotation = cfg.mae = false;
  GradMap<float> grads;
  const auto l = joint_step(p, data[0], 1, cfg, 3, grads);
  EXPECT_EQ(l.rotation, 0.0);
  EXPECT_EQ(l.mae, 0.0);
  for (const auto& e : grads) {
    EXPECT_TRUE(p[e.index].partition == Partition::extractor || p[e.index].partition == Partition::interpolator);
  }
}

TEST(Train, ZeroEpochsReturnsTheInitialization) {
  const auto init = init_params<float>(tiny_arch(), 6);
  EXPECT_EQ(train(init, tiny_train_set(2), tiny_train(0)), init);
}

TEST(Train, IsDeterministicAndReportsEveryEpoch) {
  const auto init = init_params<float>(tiny_arch(), 7);
  const auto data = tiny_train_set(3);
  std::vector<EpochStats> log;
  const auto a = train(init, data, tiny_train(3), [&](const EpochStats& s) { log.push_back(s); });
  EXPECT_EQ(a, train(init, data, tiny_train(3)));
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log[2].epoch, 3u);
  EXPECT_FALSE(a == init);
}

TEST(Train, LossDecreasesOnASmallSet) {
  const auto init = init_params<float>(tiny_arch(), 8);
  std::vector<double> losses;
  auto cfg = tiny_train(25);
  cfg.lr = 3e-3;
  train(init, tiny_train_set(4), cfg, [&](const EpochStats& s) { losses.push_back(s.loss); });
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Train, NonFiniteLossThrows) {
  auto init = init_params<float>(tiny_arch(), 9);
  init.value(init.index_of("g_rot.fc2.bias"))[0] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(train(init, tiny_train_set(1), tiny_train(1)), NumericalError);
}

}  // namespace
}  // namespace ttvi
