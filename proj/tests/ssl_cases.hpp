#pragma once

// End-to-end pretext-loss gradient checks through extractor and head, shared
// by the unit tests and the acceptance binary.

#include <random>

#include "test_support.hpp"
#include "ttvi/grad_check.hpp"
#include "ttvi/ttt.hpp"

namespace ttvi::testing {

/// Tiny double-precision model with random (non-zero) biases so no ReLU sits
/// exactly on its kink, plus two random input volumes.
struct SslGradCase {
  ParamSet<double> params;
  Tensor<double> inputs;
};

inline SslGradCase ssl_grad_case(std::uint64_t seed) {
  auto params = init_params<double>(tiny_arch(), seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params.value(i);
    if (t.rank() == 1 || params[i].name == "h.out.weight") {
      for (auto& v : t.data()) v = u(rng);
    }
  }
  return {std::move(params), random_tensor<double>({2, 1, 8, 8, 8}, seed + 1, 0.0, 1.0)};
}

/// Max relative error of the pretext loss gradient w.r.t. every extractor and
/// head tensor of `task`.
inline GradCheckResult check_ssl_gradient(const SslGradCase& c, Task task, std::uint64_t instance,
                                          std::size_t coords_per_tensor) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    const auto p = c.params[i].partition;
    if (p == Partition::extractor || p == task_head(task)) idx.push_back(i);
  }
  std::vector<Tensor<double>> point;
  for (auto i : idx) point.push_back(c.params.value(i));
  const LossBuilder build = [&](ag::Graph<double>& g, std::span<const ag::NodeId> ids) {
    BoundParams bound;
    bound.ids.resize(c.params.size());
    bound.trainable.assign(c.params.size(), false);
    std::size_t k = 0;
    for (std::size_t i = 0; i < c.params.size(); ++i) {
      if (k < idx.size() && idx[k] == i) {
        bound.ids[i] = ids[k++];
        bound.trainable[i] = true;
      } else {
        bound.ids[i] = g.constant(c.params.value(i));
      }
    }
    return ssl_objective(g, c.params, bound, c.inputs, task, instance, {4, 4, 4}, 0.8);
  };
  GradCheckOptions opt;
  opt.max_coords_per_tensor = coords_per_tensor;
  opt.seed = instance;
  return grad_check(build, point, opt);
}

}  // namespace ttvi::testing
