#include "ttvi/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ttvi {

namespace {

using std::size_t;

void check_trailing(const Shape& s, const std::array<size_t, 3>& v, const char* op) {
  if (s.size() < 3 || s[s.size() - 3] != v[0] || s[s.size() - 2] != v[1] || s[s.size() - 1] != v[2]) {
    throw ShapeError(std::string(op) + ": tensor " + to_string(s) + " does not end in mask volume " +
                     to_string(Shape{v[0], v[1], v[2]}));
  }
}

template <typename T>
void check_one_hot(const Tensor<T>& labels) {
  if (labels.rank() != 2 || labels.dim(1) != 4 || labels.dim(0) == 0) {
    throw ShapeError("rotation_loss: labels must be [N,4] with N >= 1, got " + to_string(labels.shape()));
  }
  for (size_t r = 0; r < labels.dim(0); ++r) {
    int ones = 0;
    for (size_t c = 0; c < 4; ++c) {
      const T v = labels[r * 4 + c];
      if (v == T{1}) {
        ++ones;
      } else if (v != T{0}) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) throw ContractError("rotation_loss: label row " + std::to_string(r) + " is not one-hot");
  }
}

}  // namespace

RotationLabel::RotationLabel(int k) : k_(k) {
  if (k < 0 || k > 3) throw DomainError("rotation label must be in {0,1,2,3}, got " + std::to_string(k));
}

template <typename T>
Tensor<T> rotate(const Tensor<T>& volume, RotationLabel label) {
  const Shape& s = volume.shape();
  if (s.size() < 2) throw ShapeError("rotate: need at least [H,W], got " + to_string(s));
  const size_t h = s[s.size() - 2], w = s[s.size() - 1];
  if (h != w) {
    throw ShapeError("rotate: lossless quarter turns need H == W, got " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  const size_t n = h, plane = n * n, planes = volume.size() / plane;
  Tensor<T> out(s);
  for (size_t p = 0; p < planes; ++p) {
    const T* src = volume.raw() + p * plane;
    T* dst = out.raw() + p * plane;
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < n; ++j) {
        size_t si = i, sj = j;
        switch (label.k()) {
          case 0: break;
          case 1: si = j; sj = n - 1 - i; break;
          case 2: si = n - 1 - i; sj = n - 1 - j; break;
          case 3: si = n - 1 - j; sj = i; break;
        }
        dst[i * n + j] = src[si * n + sj];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> one_hot(std::span<const RotationLabel> labels) {
  Tensor<T> out({labels.size(), 4});
  for (size_t i = 0; i < labels.size(); ++i) out[i * 4 + static_cast<size_t>(labels[i].k())] = T{1};
  return out;
}

template <typename T>
ag::NodeId rotation_loss(ag::Graph<T>& g, ag::NodeId logits, const Tensor<T>& labels) {
  check_one_hot(labels);
  require_same_shape(g.value(logits).shape(), labels.shape(), "rotation_loss");
  const auto logp = ag::log_softmax(g, logits);
  const auto picked = ag::mul(g, logp, g.constant(labels));
  return ag::scale(g, ag::sum(g, picked), static_cast<T>(-1.0 / static_cast<double>(labels.dim(0))));
}

template <typename T>
double rotation_loss(const Tensor<T>& logits, const Tensor<T>& labels) {
  check_one_hot(labels);
  require_same_shape(logits.shape(), labels.shape(), "rotation_loss");
  double total = 0.0;
  for (size_t r = 0; r < labels.dim(0); ++r) {
    const T* x = logits.raw() + r * 4;
    const double m = *std::max_element(x, x + 4);
    double z = 0.0;
    for (size_t c = 0; c < 4; ++c) z += std::exp(static_cast<double>(x[c]) - m);
    for (size_t c = 0; c < 4; ++c) {
      if (labels[r * 4 + c] == T{1}) total -= static_cast<double>(x[c]) - m - std::log(z);
    }
  }
  return total / static_cast<double>(labels.dim(0));
}

MaskSpec make_mask(std::array<std::size_t, 3> volume, std::array<std::size_t, 3> patch, double mask_ratio,
                   std::uint64_t seed) {
  for (size_t a = 0; a < 3; ++a) {
    if (patch[a] == 0 || volume[a] % patch[a] != 0) {
      throw ShapeError("make_mask: patch " + to_string(Shape{patch[0], patch[1], patch[2]}) +
                       " does not divide volume " + to_string(Shape{volume[0], volume[1], volume[2]}));
    }
  }
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) {
    throw DomainError("make_mask: mask_ratio must be in [0,1], got " + std::to_string(mask_ratio));
  }
  MaskSpec spec;
  spec.volume = volume;
  spec.patch = patch;
  spec.mask_ratio = mask_ratio;
  spec.seed = seed;
  const size_t total = spec.total_patches();
  const auto count = static_cast<size_t>(std::floor(mask_ratio * static_cast<double>(total) + 0.5));
  std::vector<size_t> order(total);
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first `count` slots form a uniform subset.
  for (size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<size_t> pick(i, total - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  spec.masked_patches.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(spec.masked_patches.begin(), spec.masked_patches.end());
  return spec;
}

template <typename T>
Tensor<T> mask_indicator(const MaskSpec& spec) {
  const auto& v = spec.volume;
  const auto grid = spec.patch_grid();
  Tensor<T> m({v[0], v[1], v[2]});
  for (size_t idx : spec.masked_patches) {
    if (idx >= spec.total_patches()) throw ContractError("mask: patch index out of range");
    const size_t pz = idx / (grid[1] * grid[2]);
    const size_t py = (idx / grid[2]) % grid[1];
    const size_t px = idx % grid[2];
    for (size_t z = pz * spec.patch[0]; z < (pz + 1) * spec.patch[0]; ++z) {
      for (size_t y = py * spec.patch[1]; y < (py + 1) * spec.patch[1]; ++y) {
        T* row = m.raw() + (z * v[1] + y) * v[2];
        std::fill(row + px * spec.patch[2], row + (px + 1) * spec.patch[2], T{1});
      }
    }
  }
  return m;
}

template <typename T>
Tensor<T> apply_mask(const Tensor<T>& volume, const MaskSpec& spec) {
  check_trailing(volume.shape(), spec.volume, "apply_mask");
  const Tensor<T> m = mask_indicator<T>(spec);
  Tensor<T> out = volume;
  const size_t vox = m.size();
  for (size_t i = 0; i < out.size(); ++i) {
    if (m[i % vox] != T{0}) out[i] = T{0};
  }
  return out;
}

template <typename T>
ag::NodeId mae_loss(ag::Graph<T>& g, ag::NodeId recon, const Tensor<T>& original, const MaskSpec& spec) {
  require_same_shape(g.value(recon).shape(), original.shape(), "mae_loss");
  check_trailing(original.shape(), spec.volume, "mae_loss");
  if (spec.masked_patches.empty()) throw ContractError("mae_loss: empty mask, loss undefined");
  const Tensor<T> m1 = mask_indicator<T>(spec);
  Tensor<T> m(original.shape());
  for (size_t i = 0; i < m.size(); ++i) m[i] = m1[i % m1.size()];
  const double count = static_cast<double>(spec.masked_voxels() * (original.size() / m1.size()));
  const auto diff = ag::sub(g, recon, g.constant(original));
  const auto masked = ag::mul(g, ag::mul(g, diff, diff), g.constant(std::move(m)));
  return ag::scale(g, ag::sum(g, masked), static_cast<T>(1.0 / count));
}

template <typename T>
double mae_loss(const Tensor<T>& recon, const Tensor<T>& original, const MaskSpec& spec) {
  require_same_shape(recon.shape(), original.shape(), "mae_loss");
  check_trailing(original.shape(), spec.volume, "mae_loss");
  if (spec.masked_patches.empty()) throw ContractError("mae_loss: empty mask, loss undefined");
  const Tensor<T> m = mask_indicator<T>(spec);
  double total = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < recon.size(); ++i) {
    if (m[i % m.size()] == T{0}) continue;
    const double d = static_cast<double>(recon[i]) - static_cast<double>(original[i]);
    total += d * d;
    ++count;
  }
  return total / static_cast<double>(count);
}

#define TTVI_INSTANTIATE_SSL(T)                                                                   \
  template Tensor<T> rotate<T>(const Tensor<T>&, RotationLabel);                                  \
  template Tensor<T> one_hot<T>(std::span<const RotationLabel>);                                  \
  template ag::NodeId rotation_loss<T>(ag::Graph<T>&, ag::NodeId, const Tensor<T>&);              \
  template double rotation_loss<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> mask_indicator<T>(const MaskSpec&);                                          \
  template Tensor<T> apply_mask<T>(const Tensor<T>&, const MaskSpec&);                            \
  template ag::NodeId mae_loss<T>(ag::Graph<T>&, ag::NodeId, const Tensor<T>&, const MaskSpec&);  \
  template double mae_loss<T>(const Tensor<T>&, const Tensor<T>&, const MaskSpec&);

TTVI_INSTANTIATE_SSL(float)
TTVI_INSTANTIATE_SSL(double)

#undef TTVI_INSTANTIATE_SSL

}  // namespace ttvi
