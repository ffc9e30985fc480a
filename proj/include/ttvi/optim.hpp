#pragma once

// Gradient maps and the two optimizers: plain SGD (used for every
// bit-exactness property) and Adam (pre-deployment training, optional at test
// time).

#include <vector>

#include "ttvi/nets.hpp"

namespace ttvi {

/// Gradients keyed by parameter index; only trainable, reached tensors appear.
template <typename T>
struct GradEntry {
  std::size_t index;
  Tensor<T> grad;
};

template <typename T>
using GradMap = std::vector<GradEntry<T>>;

/// Collects the gradient of every trainable tensor the backward pass reached.
template <typename T>
GradMap<T> collect_gradients(const ag::Gradients<T>& grads, const BoundParams& bound);

/// theta[k] <- theta[k] - eta * grad[k] for each keyed tensor; all other tensors
/// are untouched. Throws ContractError for unknown indices or mismatched shapes.
template <typename T>
void sgd_step(ParamSet<T>& theta, const GradMap<T>& grads, double eta);

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(const ParamSet<T>& like, AdamOptions options);
  void step(ParamSet<T>& theta, const GradMap<T>& grads);
  std::size_t steps() const { return t_; }

 private:
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace ttvi
