#pragma once

// Self-supervised pretext tasks: 4-way axial rotation classification and
// masked-patch volume reconstruction.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ttvi/autograd.hpp"
#include "ttvi/tensor.hpp"

namespace ttvi {

/// Rotation by k * 90 degrees in the H-W plane about the depth axis.
class RotationLabel {
 public:
  explicit RotationLabel(int k);
  int k() const { return k_; }
  friend bool operator==(RotationLabel, RotationLabel) = default;

 private:
  int k_;
};

/// Rotates every H-W slice of a [..., H, W] tensor counter-clockwise (row index
/// pointing down) by k quarter turns. Exact voxel permutation; requires H == W.
template <typename T>
Tensor<T> rotate(const Tensor<T>& volume, RotationLabel label);

/// [N, 4] one-hot rows.
template <typename T>
Tensor<T> one_hot(std::span<const RotationLabel> labels);

/// Mean cross-entropy -1/N sum_i sum_c y_ic log softmax(logits)_ic. Label rows
/// must be one-hot.
template <typename T>
ag::NodeId rotation_loss(ag::Graph<T>& g, ag::NodeId logits, const Tensor<T>& labels);
template <typename T>
double rotation_loss(const Tensor<T>& logits, const Tensor<T>& labels);

struct MaskSpec {
  std::array<std::size_t, 3> volume{};       // D, H, W
  std::array<std::size_t, 3> patch{8, 8, 8};
  double mask_ratio = 0.8;
  std::uint64_t seed = 0;
  std::vector<std::size_t> masked_patches;  // sorted, unique

  std::array<std::size_t, 3> patch_grid() const {
    return {volume[0] / patch[0], volume[1] / patch[1], volume[2] / patch[2]};
  }
  std::size_t total_patches() const {
    const auto g = patch_grid();
    return g[0] * g[1] * g[2];
  }
  std::size_t masked_voxels() const { return masked_patches.size() * patch[0] * patch[1] * patch[2]; }
};

/// round-half-up(mask_ratio * total) patches drawn uniformly without
/// replacement; the same seed always yields the same set.
MaskSpec make_mask(std::array<std::size_t, 3> volume, std::array<std::size_t, 3> patch, double mask_ratio,
                   std::uint64_t seed);

/// 1 on masked voxels, 0 elsewhere; shape [D, H, W].
template <typename T>
Tensor<T> mask_indicator(const MaskSpec& spec);

/// Zeroes masked voxels of a tensor whose last three extents are [D, H, W].
template <typename T>
Tensor<T> apply_mask(const Tensor<T>& volume, const MaskSpec& spec);

/// Mean squared error over masked voxels only.
template <typename T>
ag::NodeId mae_loss(ag::Graph<T>& g, ag::NodeId recon, const Tensor<T>& original, const MaskSpec& spec);
template <typename T>
double mae_loss(const Tensor<T>& recon, const Tensor<T>& original, const MaskSpec& spec);

}  // namespace ttvi
