#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ttvi/autograd.hpp"

namespace ttvi {

/// Builds a scalar loss from the supplied parameter nodes.
using LossBuilder = std::function<ag::NodeId(ag::Graph<double>&, std::span<const ag::NodeId>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  // Coordinates probed per tensor; 0 probes every coordinate. Probed
  // coordinates are drawn without replacement from `seed`.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients of `build` at `point` with central finite
/// differences. Per coordinate the error is
///   |analytic - (f(p + eps e) - f(p - eps e)) / (2 eps)| / max(1, |analytic|)
/// and the maximum is returned. Throws NumericalError if f is non-finite.
GradCheckResult grad_check(const LossBuilder& build, std::span<const Tensor<double>> point,
                           const GradCheckOptions& options = {});

}  // namespace ttvi
