#include "ttvi/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ttvi {

namespace {

double evaluate(const LossBuilder& build, std::span<const Tensor<double>> point) {
  ag::Graph<double> g;
  std::vector<ag::NodeId> ids;
  ids.reserve(point.size());
  for (const auto& t : point) ids.push_back(g.constant(t));
  const double v = g.value(build(g, ids)).item();
  if (!std::isfinite(v)) throw NumericalError("grad_check: loss is not finite", {v});
  return v;
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& build, std::span<const Tensor<double>> point,
                           const GradCheckOptions& options) {
  ag::Graph<double> g;
  std::vector<ag::NodeId> ids;
  for (const auto& t : point) ids.push_back(g.variable(t));
  const auto loss = build(g, ids);
  if (!std::isfinite(g.value(loss).item())) {
    throw NumericalError("grad_check: loss is not finite", {g.value(loss).item()});
  }
  const auto grads = g.backward(loss);

  std::vector<Tensor<double>> probe(point.begin(), point.end());
  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (std::size_t t = 0; t < probe.size(); ++t) {
    const Tensor<double> analytic = grads[ids[t]];
    std::vector<std::size_t> coords(probe[t].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_tensor && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
    }
    for (std::size_t i : coords) {
      const double saved = probe[t][i];
      probe[t][i] = saved + options.eps;
      const double up = evaluate(build, probe);
      probe[t][i] = saved - options.eps;
      const double down = evaluate(build, probe);
      probe[t][i] = saved;
      const double fd = (up - down) / (2.0 * options.eps);
      const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
      ++result.coordinates_checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_tensor = t;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace ttvi
