#include "ttvi/optim.hpp"

#include <cmath>

#include "ttvi/errors.hpp"

namespace ttvi {

template <typename T>
GradMap<T> collect_gradients(const ag::Gradients<T>& grads, const BoundParams& bound) {
  GradMap<T> out;
  for (std::size_t i = 0; i < bound.ids.size(); ++i) {
    if (bound.trainable[i] && grads.reached(bound.ids[i])) out.push_back({i, grads[bound.ids[i]]});
  }
  return out;
}

namespace {

template <typename T>
void check_entry(const ParamSet<T>& theta, const GradEntry<T>& e, const char* op) {
  if (e.index >= theta.size()) {
    throw ContractError(std::string(op) + ": gradient for unknown parameter index " + std::to_string(e.index));
  }
  if (e.grad.shape() != theta.value(e.index).shape()) {
    throw ContractError(std::string(op) + ": gradient " + to_string(e.grad.shape()) + " for " + theta[e.index].name +
                        to_string(theta.value(e.index).shape()));
  }
}

}  // namespace

template <typename T>
void sgd_step(ParamSet<T>& theta, const GradMap<T>& grads, double eta) {
  for (const auto& e : grads) check_entry(theta, e, "sgd_step");
  const T lr = static_cast<T>(eta);
  for (const auto& e : grads) {
    auto& p = theta.value(e.index);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * e.grad[i];
  }
}

template <typename T>
Adam<T>::Adam(const ParamSet<T>& like, AdamOptions options) : options_(options) {
  for (std::size_t i = 0; i < like.size(); ++i) {
    m_.emplace_back(like.value(i).size(), 0.0);
    v_.emplace_back(like.value(i).size(), 0.0);
  }
}

template <typename T>
void Adam<T>::step(ParamSet<T>& theta, const GradMap<T>& grads) {
  for (const auto& e : grads) check_entry(theta, e, "adam");
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (const auto& e : grads) {
    auto& p = theta.value(e.index);
    auto& m = m_.at(e.index);
    auto& v = v_.at(e.index);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = static_cast<double>(e.grad[i]);
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double update = options_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.epsilon);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
    }
  }
}

template GradMap<float> collect_gradients(const ag::Gradients<float>&, const BoundParams&);
template GradMap<double> collect_gradients(const ag::Gradients<double>&, const BoundParams&);
template void sgd_step(ParamSet<float>&, const GradMap<float>&, double);
template void sgd_step(ParamSet<double>&, const GradMap<double>&, double);
template class Adam<float>;
template class Adam<double>;

}  // namespace ttvi
