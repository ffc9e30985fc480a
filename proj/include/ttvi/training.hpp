#pragma once

// Pre-deployment training of the full model: interpolation MSE against true
// interior frames plus the weighted pretext losses, optimized with Adam.

#include <functional>
#include <vector>

#include "ttvi/nets.hpp"
#include "ttvi/optim.hpp"
#include "ttvi/ttt.hpp"

namespace ttvi {

struct TrainConfig {
  std::size_t epochs = 200;
  double lr = 2e-4;
  std::size_t batch_size = 1;
  double aux_weight = 1.0;  // lambda on each pretext loss
  bool interpolation = true;
  bool rotation = true;
  bool mae = true;
  std::array<std::size_t, 3> mask_patch{8, 8, 8};
  double mask_ratio = 0.8;
  std::uint64_t seed = 0;

  void validate() const;  // throws DomainError
};

/// One training sequence: all frames, uniformly spaced in time.
using TrainSequence = std::vector<Tensor<float>>;

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean total loss over the epoch's steps
  double interpolation = 0.0;
  double rotation = 0.0;
  double mae = 0.0;
};

struct StepLosses {
  double total = 0.0, interpolation = 0.0, rotation = 0.0, mae = 0.0;
};

/// Loss and gradients of one training sample: the endpoints of `seq`, the
/// target frame `target`, and pretext instances drawn from `instance`.
StepLosses joint_step(const ParamSet<float>& params, const TrainSequence& seq, std::size_t target,
                      const TrainConfig& cfg, std::uint64_t instance, GradMap<float>& grads);

/// Each epoch visits every sequence once in a seeded order, with a seeded
/// interior target frame; `batch_size` samples are averaged per Adam step.
/// Throws NumericalError on a non-finite loss.
ParamSet<float> train(const ParamSet<float>& init, const std::vector<TrainSequence>& data, const TrainConfig& cfg,
                      const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace ttvi
