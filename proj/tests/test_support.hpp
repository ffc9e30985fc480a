#pragma once

// Shared fixtures for the unit tests: seeded random tensors and a tiny
// architecture that keeps end-to-end tests fast.

#include <cstdint>
#include <random>

#include "ttvi/nets.hpp"
#include "ttvi/synth.hpp"
#include "ttvi/ttt.hpp"

namespace ttvi::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

/// 8^3 volumes, two pooled stages, a handful of channels.
inline ArchConfig tiny_arch() {
  ArchConfig a;
  a.volume = {8, 8, 8};
  a.extractor_channels = {3, 4};
  a.pooled_stages = 2;
  a.interp_channels = {4, 3};
  a.mae_channels = {4, 3};
  a.rotation_hidden = 5;
  return a;
}

inline TTTConfig tiny_ttt(Scheme scheme, Task task, std::size_t steps) {
  TTTConfig c;
  c.scheme = scheme;
  c.task = task;
  c.ttt_epochs = steps;
  c.eta = 1e-2;
  c.seed = 11;
  c.mask_patch = {4, 4, 4};
  return c;
}

/// Unlabeled test items cut from synthetic 8^3 sequences.
inline std::vector<TestItem> tiny_items(std::size_t count, std::uint64_t seed) {
  std::vector<TestItem> items;
  for (std::size_t i = 0; i < count; ++i) {
    synth::SequenceSpec spec;
    spec.grid = {8, 8, 8};
    spec.n_frames = 3;
    spec.seed = seed + i;
    auto seq = synth::generate_sequence(spec);
    items.push_back({"item" + std::to_string(i), seq.frames.front(), seq.frames.back()});
  }
  return items;
}

}  // namespace ttvi::testing
