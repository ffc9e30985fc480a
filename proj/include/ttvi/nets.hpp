#pragma once

// The Y-shaped model: a shared 3D feature extractor feeding an interpolation
// head plus two self-supervised heads (rotation classifier, masked-volume
// decoder).
//
//   volume --extract--> features --interpolate(feat0, feat1, t)--> frame at t
//                              \--predict_rotation--> 4 logits
//                              \--reconstruct--> full volume

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ttvi/autograd.hpp"
#include "ttvi/tensor.hpp"

namespace ttvi {

enum class Partition { extractor = 0, interpolator = 1, rotation_head = 2, mae_head = 3 };

inline constexpr std::array<Partition, 4> kAllPartitions{Partition::extractor, Partition::interpolator,
                                                         Partition::rotation_head, Partition::mae_head};

std::string_view partition_name(Partition p);
Partition parse_partition(std::string_view name);

/// Architecture hyperparameters. Decoder depth equals the number of pooled
/// extractor stages so every head returns to the input resolution.
struct ArchConfig {
  std::array<std::size_t, 3> volume{32, 32, 32};
  std::vector<std::size_t> extractor_channels{16, 32, 64, 64};
  std::size_t pooled_stages = 3;
  std::vector<std::size_t> interp_channels{32, 16, 8};
  std::vector<std::size_t> mae_channels{32, 16, 8};
  std::size_t rotation_hidden = 32;
  bool trilinear_upsampling = false;

  std::size_t feature_channels() const { return extractor_channels.back(); }
  std::array<std::size_t, 3> feature_extent() const;
  Shape feature_shape(std::size_t batch = 1) const;
  void validate() const;
  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Partition partition;
  Tensor<T> value;
};

/// All model parameters, partitioned into f (extractor), h (interpolator) and
/// one g per auxiliary task. Copies are deep; the tensor list is fixed at
/// construction and never grows or shrinks.
template <typename T>
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(ArchConfig arch, std::vector<NamedTensor<T>> tensors);

  const ArchConfig& arch() const { return arch_; }
  std::size_t size() const { return tensors_.size(); }
  const NamedTensor<T>& operator[](std::size_t i) const { return tensors_.at(i); }
  Tensor<T>& value(std::size_t i) { return tensors_.at(i).value; }
  const Tensor<T>& value(std::size_t i) const { return tensors_.at(i).value; }

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // throws ContractError if absent
  const Tensor<T>& get(std::string_view name) const { return value(index_of(name)); }

  bool frozen(Partition p) const { return frozen_[static_cast<std::size_t>(p)]; }
  void set_frozen(Partition p, bool f) { frozen_[static_cast<std::size_t>(p)] = f; }

  std::size_t scalar_count() const;
  std::size_t scalar_count(Partition p) const;

  template <typename U>
  ParamSet<U> cast() const {
    std::vector<NamedTensor<U>> out;
    out.reserve(tensors_.size());
    for (const auto& t : tensors_) out.push_back({t.name, t.partition, t.value.template cast<U>()});
    ParamSet<U> p(arch_, std::move(out));
    for (auto part : kAllPartitions) p.set_frozen(part, frozen(part));
    return p;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.tensors_.size() != b.tensors_.size() || !(a.arch_ == b.arch_)) return false;
    for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
      if (a.tensors_[i].name != b.tensors_[i].name || !(a.tensors_[i].value == b.tensors_[i].value)) {
        return false;
      }
    }
    return true;
  }

 private:
  ArchConfig arch_;
  std::vector<NamedTensor<T>> tensors_;
  std::array<bool, 4> frozen_{};
};

/// Fan-in uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases, and a
/// zero final interpolation layer, drawn from `seed` in parameter order.
template <typename T>
ParamSet<T> init_params(const ArchConfig& arch, std::uint64_t seed);

/// Feature tensor plus the volume it was computed from.
template <typename T>
struct FeatureMap {
  Tensor<T> features;  // [N, C, D', H', W']
  Tensor<T> source;    // [N, 1, D, H, W]
};

// ---- graph-level model pieces (used by training and adaptation) ------------

/// Parameter nodes of one ParamSet bound into a graph.
struct BoundParams {
  std::vector<ag::NodeId> ids;
  std::vector<bool> trainable;
};

/// Binds every tensor as a graph node. Tensors in `trainable` partitions become
/// variables, the rest constants.
template <typename T>
BoundParams bind(ag::Graph<T>& g, const ParamSet<T>& params, std::array<bool, 4> trainable);

namespace net {

template <typename T>
ag::NodeId extract(ag::Graph<T>& g, const ParamSet<T>& params, const BoundParams& bound, ag::NodeId volume);

// base = (1-t) * I0 + t * I1 enters as a constant node.
template <typename T>
ag::NodeId interpolate(ag::Graph<T>& g, const ParamSet<T>& params, const BoundParams& bound,
                       ag::NodeId feat0, ag::NodeId feat1, ag::NodeId base, T t);

template <typename T>
ag::NodeId rotation_logits(ag::Graph<T>& g, const ParamSet<T>& params, const BoundParams& bound,
                           ag::NodeId features);

template <typename T>
ag::NodeId reconstruct(ag::Graph<T>& g, const ParamSet<T>& params, const BoundParams& bound,
                       ag::NodeId features);

}  // namespace net

// ---- pure evaluation API ---------------------------------------------------

template <typename T>
FeatureMap<T> extract(const ParamSet<T>& params, const Tensor<T>& volume);

/// Frame at time t in (0, 1): linear blend of the two source frames plus the
/// decoded residual.
template <typename T>
Tensor<T> interpolate(const ParamSet<T>& params, const FeatureMap<T>& feat0, const FeatureMap<T>& feat1,
                      double t);

template <typename T>
Tensor<T> predict_rotation(const ParamSet<T>& params, const FeatureMap<T>& feat);

template <typename T>
Tensor<T> reconstruct(const ParamSet<T>& params, const FeatureMap<T>& feat_of_masked);

/// Reshapes a [D,H,W] or [N,1,D,H,W] volume to [N,1,D,H,W] and checks the extents
/// against the architecture.
template <typename T>
Tensor<T> as_network_input(const ArchConfig& arch, const Tensor<T>& volume);

}  // namespace ttvi
