#pragma once

// Raw compute kernels behind the differentiable ops.
//
// Two families live here:
//   ttvi::kernels            OpenMP-parallel production kernels.
//   ttvi::kernels::reference Serial direct-loop versions kept as test oracles
//                            and as the benchmark baseline.
//
// Every production kernel assigns each output scalar to exactly one thread and
// accumulates it in a fixed order, so results are bitwise identical for any
// thread count.

#include <cstddef>

#include "ttvi/tensor.hpp"

namespace ttvi::kernels {

/// Shape bookkeeping for a batched 3D convolution (NCDHW input, FCkkk kernel).
struct Conv3dGeometry {
  std::size_t batch = 0, channels = 0, depth = 0, height = 0, width = 0;
  std::size_t filters = 0, kd = 0, kh = 0, kw = 0;
  std::size_t stride = 1, pad = 0;
  std::size_t out_d = 0, out_h = 0, out_w = 0;

  static Conv3dGeometry make(const Shape& input, const Shape& kernel, std::size_t stride,
                             std::size_t pad);

  std::size_t taps() const { return kd * kh * kw; }
  std::size_t patch() const { return channels * taps(); }
  std::size_t in_volume() const { return depth * height * width; }
  std::size_t out_volume() const { return out_d * out_h * out_w; }
  Shape output_shape() const { return {batch, filters, out_d, out_h, out_w}; }
};

template <typename T>
void conv3d_forward(const Conv3dGeometry& g, const T* input, const T* kernel, T* output);

// grad_input must be zeroed by the caller; contributions are added.
template <typename T>
void conv3d_backward_input(const Conv3dGeometry& g, const T* kernel, const T* grad_out,
                           T* grad_input);

// Overwrites grad_kernel.
template <typename T>
void conv3d_backward_kernel(const Conv3dGeometry& g, const T* input, const T* grad_out,
                            T* grad_kernel);

// out[n, m] = bias[m] + sum_k in[n, k] * weight[k, m]
template <typename T>
void dense_forward(std::size_t n, std::size_t k, std::size_t m, const T* input, const T* weight,
                   const T* bias, T* output);

// 2x2x2 stride-2 max pooling over [N*C, D, H, W]; argmax holds flat input offsets.
template <typename T>
void max_pool3d_forward(std::size_t planes, std::size_t d, std::size_t h, std::size_t w,
                        const T* input, T* output, std::size_t* argmax);

// Factor-2 nearest upsampling over [N*C, D, H, W].
template <typename T>
void upsample_nearest_forward(std::size_t planes, std::size_t d, std::size_t h, std::size_t w,
                              const T* input, T* output);
template <typename T>
void upsample_nearest_backward(std::size_t planes, std::size_t d, std::size_t h, std::size_t w,
                               const T* grad_out, T* grad_input);

// Factor-2 trilinear upsampling (half-pixel centres, edge clamped) over [N*C, D, H, W].
template <typename T>
void upsample_trilinear_forward(std::size_t planes, std::size_t d, std::size_t h, std::size_t w,
                                const T* input, T* output);
template <typename T>
void upsample_trilinear_backward(std::size_t planes, std::size_t d, std::size_t h, std::size_t w,
                                 const T* grad_out, T* grad_input);

/// Number of OpenMP threads the production kernels will use (1 without OpenMP).
int max_threads();
void set_threads(int n);

namespace reference {

template <typename T>
void conv3d_forward(const Conv3dGeometry& g, const T* input, const T* kernel, T* output);
template <typename T>
void conv3d_backward_input(const Conv3dGeometry& g, const T* kernel, const T* grad_out,
                           T* grad_input);
template <typename T>
void conv3d_backward_kernel(const Conv3dGeometry& g, const T* input, const T* grad_out,
                            T* grad_kernel);

}  // namespace reference

}  // namespace ttvi::kernels
