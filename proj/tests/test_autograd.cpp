#include <gtest/gtest.h>

#include "grad_cases.hpp"
#include "ssl_cases.hpp"

namespace ttvi {
namespace {

class OpGradient : public ::testing::TestWithParam<std::string> {};

TEST_P(OpGradient, MatchesCentralDifferencesOnTwentyInstances) {
  const auto cases = testing::grad_cases(GetParam(), 20, 3);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto r = grad_check(cases[i].build, cases[i].point);
    EXPECT_LT(r.max_rel_error, 1e-4) << GetParam() << " instance " << i << " tensor " << r.worst_tensor
                                     << " index " << r.worst_index;
    EXPECT_GT(r.coordinates_checked, 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::ValuesIn(testing::differentiable_ops()),
                         [](const auto& info) { return info.param; });

TEST(GradCheck, SumOfSquaresIsExactToRoundoff) {
  const LossBuilder f = [](ag::Graph<double>& g, std::span<const ag::NodeId> p) {
    return ag::sum(g, ag::mul(g, p[0], p[0]));
  };
  const std::vector<Tensor<double>> point{testing::random_tensor<double>({3, 4, 5}, 1, -3, 3)};
  EXPECT_LT(grad_check(f, point).max_rel_error, 1e-8);
}

TEST(GradCheck, NonFiniteLossThrows) {
  const LossBuilder f = [](ag::Graph<double>& g, std::span<const ag::NodeId> p) {
    return ag::sum(g, ag::scale(g, p[0], std::numeric_limits<double>::infinity()));
  };
  const std::vector<Tensor<double>> point{Tensor<double>({2}, 1.0)};
  EXPECT_THROW(grad_check(f, point), NumericalError);
}

TEST(GradCheck, CoordinateSamplingIsBoundedAndSeeded) {
  const LossBuilder f = [](ag::Graph<double>& g, std::span<const ag::NodeId> p) {
    return ag::sum(g, ag::mul(g, p[0], p[0]));
  };
  const std::vector<Tensor<double>> point{testing::random_tensor<double>({10, 10}, 2)};
  GradCheckOptions opt;
  opt.max_coords_per_tensor = 7;
  EXPECT_EQ(grad_check(f, point, opt).coordinates_checked, 7u);
}

TEST(GradCheck, DetectsAWrongGradient) {
  // relu evaluated exactly on its kink: one-sided analytic vs. centred estimate.
  const LossBuilder f = [](ag::Graph<double>& g, std::span<const ag::NodeId> p) {
    return ag::sum(g, ag::relu(g, p[0]));
  };
  const std::vector<Tensor<double>> point{Tensor<double>({1}, 0.0)};
  EXPECT_GT(grad_check(f, point).max_rel_error, 0.4);
}

class SslGradient : public ::testing::TestWithParam<Task> {};

TEST_P(SslGradient, EndToEndMatchesCentralDifferences) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto c = testing::ssl_grad_case(seed);
    const auto r = testing::check_ssl_gradient(c, GetParam(), seed * 17, 6);
    EXPECT_LT(r.max_rel_error, 1e-4) << task_name(GetParam()) << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(BothTasks, SslGradient, ::testing::Values(Task::rotation, Task::mae),
                         [](const auto& info) { return task_name(info.param); });

}  // namespace
}  // namespace ttvi
