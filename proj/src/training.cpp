#include "ttvi/training.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "ttvi/errors.hpp"
#include "ttvi/rng.hpp"

namespace ttvi {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw DomainError("train: lr must be positive");
  if (batch_size < 1) throw DomainError("train: batch_size must be >= 1");
  if (!(aux_weight >= 0.0)) throw DomainError("train: aux_weight must be >= 0");
  if (!interpolation && !rotation && !mae) throw DomainError("train: no objective enabled");
  if (!(mask_ratio > 0.0 && mask_ratio <= 1.0)) throw DomainError("train: mask_ratio must lie in (0, 1]");
}

namespace {

Tensor<float> as_batch(std::initializer_list<const Tensor<float>*> frames) {
  const Shape& s = (*frames.begin())->shape();
  Tensor<float> out({frames.size(), 1, s.at(0), s.at(1), s.at(2)});
  std::size_t offset = 0;
  for (const auto* f : frames) {
    require_same_shape(f->shape(), s, "training batch");
    std::copy_n(f->raw(), f->size(), out.raw() + offset);
    offset += f->size();
  }
  return out;
}

}  // namespace

StepLosses joint_step(const ParamSet<float>& params, const TrainSequence& seq, std::size_t target,
                      const TrainConfig& cfg, std::uint64_t instance, GradMap<float>& grads) {
  if (seq.size() < 3 || target == 0 || target + 1 >= seq.size()) {
    throw ContractError("joint_step: target " + std::to_string(target) + " is not interior to " +
                        std::to_string(seq.size()) + " frames");
  }
  ag::Graph<float> g;
  const auto bound = bind(g, params, {true, cfg.interpolation, cfg.rotation, cfg.mae});
  const float weight = static_cast<float>(cfg.aux_weight);
  const auto endpoints = as_batch({&seq.front(), &seq.back()});
  std::vector<ag::NodeId> terms;
  StepLosses losses;

  if (cfg.interpolation) {
    const double t = static_cast<double>(target) / static_cast<double>(seq.size() - 1);
    const auto x0 = g.constant(as_batch({&seq.front()}));
    const auto x1 = g.constant(as_batch({&seq.back()}));
    Tensor<float> base = as_batch({&seq.front()});
    for (std::size_t i = 0; i < base.size(); ++i) {
      base[i] = seq.front()[i] + static_cast<float>(t) * (seq.back()[i] - seq.front()[i]);
    }
    const auto pred = net::interpolate(g, params, bound, net::extract(g, params, bound, x0),
                                       net::extract(g, params, bound, x1), g.constant(std::move(base)),
                                       static_cast<float>(t));
    const auto diff = ag::sub(g, pred, g.constant(as_batch({&seq[target]})));
    const auto mse = ag::mean(g, ag::mul(g, diff, diff));
    losses.interpolation = g.value(mse).item();
    terms.push_back(mse);
  }
  if (cfg.rotation) {
    const auto l = ssl_objective(g, params, bound, endpoints, Task::rotation, derive_seed(instance, {1}),
                                 cfg.mask_patch, cfg.mask_ratio);
    losses.rotation = g.value(l).item();
    terms.push_back(ag::scale(g, l, weight));
  }
  if (cfg.mae) {
    const auto l = ssl_objective(g, params, bound, endpoints, Task::mae, derive_seed(instance, {2}),
                                 cfg.mask_patch, cfg.mask_ratio);
    losses.mae = g.value(l).item();
    terms.push_back(ag::scale(g, l, weight));
  }
  auto total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ag::add(g, total, terms[i]);
  losses.total = g.value(total).item();
  if (!std::isfinite(losses.total)) {
    throw NumericalError("non-finite training loss", {losses.total});
  }
  grads = collect_gradients(g.backward(total), bound);
  return losses;
}

ParamSet<float> train(const ParamSet<float>& init, const std::vector<TrainSequence>& data, const TrainConfig& cfg,
                      const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate();
  if (data.empty()) throw ContractError("train: empty training set");
  ParamSet<float> params = init;
  Adam<float> adam(params, AdamOptions{.lr = cfg.lr});
  std::vector<double> trace;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, {epoch}));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats{epoch + 1, 0, 0, 0, 0};
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t nb = std::min(cfg.batch_size, order.size() - b0);
      GradMap<float> sum;
      for (std::size_t j = 0; j < nb; ++j) {
        const auto& seq = data[order[b0 + j]];
        const std::size_t target = 1 + static_cast<std::size_t>(rng() % (seq.size() - 2));
        GradMap<float> grads;
        const auto l = joint_step(params, seq, target, cfg, derive_seed(cfg.seed, {epoch, b0 + j, 7}), grads);
        stats.loss += l.total;
        stats.interpolation += l.interpolation;
        stats.rotation += l.rotation;
        stats.mae += l.mae;
        if (sum.empty()) {
          sum = std::move(grads);
        } else {
          for (std::size_t k = 0; k < sum.size(); ++k) {
            for (std::size_t i = 0; i < sum[k].grad.size(); ++i) sum[k].grad[i] += grads[k].grad[i];
          }
        }
      }
      if (nb > 1) {
        for (auto& e : sum) {
          for (std::size_t i = 0; i < e.grad.size(); ++i) e.grad[i] /= static_cast<float>(nb);
        }
      }
      adam.step(params, sum);
    }
    const double n = static_cast<double>(data.size());
    stats.loss /= n;
    stats.interpolation /= n;
    stats.rotation /= n;
    stats.mae /= n;
    if (on_epoch) on_epoch(stats);
  }
  return params;
}

}  // namespace ttvi
