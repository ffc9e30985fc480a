#include "ttvi/kernels.hpp"

#include <algorithm>
#include <array>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ttvi::kernels {

namespace {

using std::size_t;

// Output positions are processed in chunks whose im2col block stays near L2
// size. Chunk widths are a multiple of kBlockCols and depend only on the layer
// geometry, so every summation order is independent of the thread count.
constexpr size_t kColsBudget = 65536;  // elements of one im2col chunk
constexpr size_t kVecBytes = 64;
constexpr size_t kRowBlock = 4;  // rows (filters) per register block
constexpr size_t kVecBlock = 4;  // vectors (columns) per register block

using Index = long long;  // OpenMP loop counters

template <typename T>
struct Simd {
  typedef T V __attribute__((vector_size(kVecBytes), aligned(alignof(T)), may_alias));
  static constexpr size_t kLanes = kVecBytes / sizeof(T);
  static V load(const T* p) { return *reinterpret_cast<const V*>(p); }
  static void store(T* p, V v) { *reinterpret_cast<V*>(p) = v; }
};

template <typename T>
constexpr size_t kBlockCols = kVecBlock * Simd<T>::kLanes;

struct Chunking {
  size_t width = 0;  // padded positions per chunk
  size_t count = 0;
};

template <typename T>
Chunking chunking(const Conv3dGeometry& g) {
  const size_t block = kBlockCols<T>;
  const size_t ov = g.out_volume();
  size_t width = std::max(block, (kColsBudget / std::max<size_t>(1, g.patch())) / block * block);
  width = std::min(width, (ov + block - 1) / block * block);
  return {width, (ov + width - 1) / width};
}

// Voxel coordinates of output positions [p0, p0 + n).
// Positions sharing an output row form runs with constant (z, y).
struct ChunkCoords {
  std::vector<Index> z, y, x;
  std::vector<size_t> run_end;  // one past the last position of j's row run
  ChunkCoords(const Conv3dGeometry& g, size_t p0, size_t n) : z(n), y(n), x(n), run_end(n) {
    for (size_t j = 0; j < n; ++j) {
      const size_t p = p0 + j;
      x[j] = static_cast<Index>((p % g.out_w) * g.stride) - static_cast<Index>(g.pad);
      y[j] = static_cast<Index>(((p / g.out_w) % g.out_h) * g.stride) - static_cast<Index>(g.pad);
      z[j] = static_cast<Index>((p / (g.out_w * g.out_h)) * g.stride) - static_cast<Index>(g.pad);
      run_end[j] = std::min(n, j + (g.out_w - p % g.out_w));
    }
  }
  size_t run(size_t j) const { return run_end[j] - j; }
};

// cols[row, j] = input voxel seen by tap `row` at chunk position j; zero for
// padding and for the tail beyond the last position.
template <typename T>
void im2col_chunk(const Conv3dGeometry& g, const T* in, const ChunkCoords& cc, size_t width, T* cols) {
  const size_t taps = g.taps();
  const size_t n = cc.x.size();
  const auto depth = static_cast<Index>(g.depth), height = static_cast<Index>(g.height),
             w = static_cast<Index>(g.width);
#pragma omp parallel for schedule(static)
  for (Index row = 0; row < static_cast<Index>(g.patch()); ++row) {
    const size_t c = static_cast<size_t>(row) / taps;
    const size_t tap = static_cast<size_t>(row) % taps;
    const auto a = static_cast<Index>(tap / (g.kh * g.kw));
    const auto b = static_cast<Index>((tap / g.kw) % g.kh);
    const auto e = static_cast<Index>(tap % g.kw);
    const T* plane = in + c * g.in_volume();
    T* dst = cols + static_cast<size_t>(row) * width;
    for (size_t j = 0; j < n;) {
      const size_t len = cc.run(j);
      const Index iz = cc.z[j] + a, iy = cc.y[j] + b;
      if (iz < 0 || iz >= depth || iy < 0 || iy >= height) {
        std::fill_n(dst + j, len, T{0});
      } else {
        const T* src = plane + static_cast<size_t>((iz * height + iy) * w);
        for (size_t q = 0; q < len; ++q) {
          const Index ix = cc.x[j + q] + e;
          dst[j + q] = (ix >= 0 && ix < w) ? src[ix] : T{0};
        }
      }
      j += len;
    }
    std::fill(dst + n, dst + width, T{0});
  }
}

// Adds each column row back into its input voxel. Rows of one channel are
// processed in tap order by a single thread, fixing the accumulation order.
template <typename T>
void col2im_chunk_add(const Conv3dGeometry& g, const T* cols, const ChunkCoords& cc, size_t width, T* in) {
  const size_t taps = g.taps();
  const size_t n = cc.x.size();
  const auto depth = static_cast<Index>(g.depth), height = static_cast<Index>(g.height),
             w = static_cast<Index>(g.width);
#pragma omp parallel for schedule(static)
  for (Index ci = 0; ci < static_cast<Index>(g.channels); ++ci) {
    const auto c = static_cast<size_t>(ci);
    T* plane = in + c * g.in_volume();
    for (size_t tap = 0; tap < taps; ++tap) {
      const auto a = static_cast<Index>(tap / (g.kh * g.kw));
      const auto b = static_cast<Index>((tap / g.kw) % g.kh);
      const auto e = static_cast<Index>(tap % g.kw);
      const T* src = cols + (c * taps + tap) * width;
      for (size_t j = 0; j < n;) {
        const size_t len = cc.run(j);
        const Index iz = cc.z[j] + a, iy = cc.y[j] + b;
        if (iz >= 0 && iz < depth && iy >= 0 && iy < height) {
          T* dst = plane + static_cast<size_t>((iz * height + iy) * w);
          for (size_t q = 0; q < len; ++q) {
            const Index ix = cc.x[j + q] + e;
            if (ix >= 0 && ix < w) dst[ix] += src[j + q];
          }
        }
        j += len;
      }
    }
  }
}

// Register block: out[i, q] = sum_k lhs(i, k) * rhs[k * ld + q], k ascending,
// for MR rows and kBlockCols<T> columns. lhs(i, k) = lhs[i * lhs_row + k * lhs_col].
template <typename T, size_t MR>
void gemm_block(size_t inner, const T* lhs, size_t lhs_row, size_t lhs_col, const T* rhs, size_t ld, T* out,
                size_t out_ld) {
  using S = Simd<T>;
  typename S::V acc[MR][kVecBlock] = {};
  for (size_t k = 0; k < inner; ++k) {
    const T* r = rhs + k * ld;
    typename S::V b[kVecBlock];
    for (size_t v = 0; v < kVecBlock; ++v) b[v] = S::load(r + v * S::kLanes);
    for (size_t i = 0; i < MR; ++i) {
      const T w = lhs[i * lhs_row + k * lhs_col];
      for (size_t v = 0; v < kVecBlock; ++v) acc[i][v] += w * b[v];
    }
  }
  for (size_t i = 0; i < MR; ++i) {
    for (size_t v = 0; v < kVecBlock; ++v) S::store(out + i * out_ld + v * S::kLanes, acc[i][v]);
  }
}

// out[r, q] = sum_k lhs(r, k) * rhs[k, q] for a rows x width chunk (width a
// multiple of kBlockCols), rhs and out with leading dimension `width`.
template <typename T>
void gemm_chunk(size_t rows, size_t inner, size_t width, const T* lhs, size_t lhs_row, size_t lhs_col,
                const T* rhs, T* out) {
  const size_t row_blocks = (rows + kRowBlock - 1) / kRowBlock;
  const size_t col_blocks = width / kBlockCols<T>;
#pragma omp parallel for schedule(static)
  for (Index job = 0; job < static_cast<Index>(row_blocks * col_blocks); ++job) {
    const size_t r0 = (static_cast<size_t>(job) / col_blocks) * kRowBlock;
    const size_t q0 = (static_cast<size_t>(job) % col_blocks) * kBlockCols<T>;
    const T* l = lhs + r0 * lhs_row;
    T* o = out + r0 * width + q0;
    switch (std::min(kRowBlock, rows - r0)) {
      case 1: gemm_block<T, 1>(inner, l, lhs_row, lhs_col, rhs + q0, width, o, width); break;
      case 2: gemm_block<T, 2>(inner, l, lhs_row, lhs_col, rhs + q0, width, o, width); break;
      case 3: gemm_block<T, 3>(inner, l, lhs_row, lhs_col, rhs + q0, width, o, width); break;
      default: gemm_block<T, kRowBlock>(inner, l, lhs_row, lhs_col, rhs + q0, width, o, width); break;
    }
  }
}

// acc[i, q] += sum_j a[i, j] * b[q, j] over a chunk for MR x kVecBlock outputs;
// each product sum is split over SIMD lanes and reduced in lane order.
template <typename T, size_t MR>
void gemm_nt_block(size_t width, const T* a, const T* b, size_t nb, T* out, size_t out_ld) {
  using S = Simd<T>;
  typename S::V acc[MR][kVecBlock] = {};
  for (size_t j = 0; j < width; j += S::kLanes) {
    typename S::V bv[kVecBlock];
    for (size_t q = 0; q < kVecBlock; ++q) bv[q] = q < nb ? S::load(b + q * width + j) : typename S::V{};
    for (size_t i = 0; i < MR; ++i) {
      const auto av = S::load(a + i * width + j);
      for (size_t q = 0; q < kVecBlock; ++q) acc[i][q] += av * bv[q];
    }
  }
  for (size_t i = 0; i < MR; ++i) {
    for (size_t q = 0; q < nb; ++q) {
      T s{0};
      for (size_t l = 0; l < S::kLanes; ++l) s += acc[i][q][l];
      out[i * out_ld + q] += s;
    }
  }
}

// out[r, c] += sum_j a[r, j] * b[c, j]; a is rows x width, b is cols x width.
template <typename T>
void gemm_nt_chunk(size_t rows, size_t cols, size_t width, const T* a, const T* b, T* out) {
  const size_t row_blocks = (rows + kRowBlock - 1) / kRowBlock;
  const size_t col_blocks = (cols + kVecBlock - 1) / kVecBlock;
#pragma omp parallel for schedule(static)
  for (Index job = 0; job < static_cast<Index>(row_blocks * col_blocks); ++job) {
    const size_t r0 = (static_cast<size_t>(job) / col_blocks) * kRowBlock;
    const size_t c0 = (static_cast<size_t>(job) % col_blocks) * kVecBlock;
    const size_t nb = std::min(kVecBlock, cols - c0);
    const T* ar = a + r0 * width;
    const T* bc = b + c0 * width;
    T* o = out + r0 * cols + c0;
    switch (std::min(kRowBlock, rows - r0)) {
      case 1: gemm_nt_block<T, 1>(width, ar, bc, nb, o, cols); break;
      case 2: gemm_nt_block<T, 2>(width, ar, bc, nb, o, cols); break;
      case 3: gemm_nt_block<T, 3>(width, ar, bc, nb, o, cols); break;
      default: gemm_nt_block<T, kRowBlock>(width, ar, bc, nb, o, cols); break;
    }
  }
}

// Copies positions [p0, p0 + n) of `rows` planes (stride ov) into a zero-padded
// rows x width block.
template <typename T>
void gather_chunk(size_t rows, size_t ov, size_t p0, size_t n, size_t width, const T* src, T* dst) {
  for (size_t r = 0; r < rows; ++r) {
    std::copy_n(src + r * ov + p0, n, dst + r * width);
    std::fill(dst + r * width + n, dst + (r + 1) * width, T{0});
  }
}

// Factor-2 linear interpolation along one axis of an [outer, len, inner] array.
template <typename T>
void upsample_axis(size_t outer, size_t len, size_t inner, const T* in, T* out) {
#pragma omp parallel for schedule(static)
  for (Index oi = 0; oi < static_cast<Index>(outer); ++oi) {
    const T* src = in + static_cast<size_t>(oi) * len * inner;
    T* dst = out + static_cast<size_t>(oi) * 2 * len * inner;
    for (size_t i = 0; i < len; ++i) {
      const T* here = src + i * inner;
      const T* prev = src + (i == 0 ? 0 : i - 1) * inner;
      const T* next = src + (i + 1 == len ? i : i + 1) * inner;
      T* even = dst + (2 * i) * inner;
      T* odd = dst + (2 * i + 1) * inner;
      for (size_t q = 0; q < inner; ++q) {
        even[q] = T(0.25) * prev[q] + T(0.75) * here[q];
        odd[q] = T(0.75) * here[q] + T(0.25) * next[q];
      }
    }
  }
}

// Adjoint of upsample_axis; overwrites grad_in.
template <typename T>
void upsample_axis_adjoint(size_t outer, size_t len, size_t inner, const T* grad_out, T* grad_in) {
#pragma omp parallel for schedule(static)
  for (Index oi = 0; oi < static_cast<Index>(outer); ++oi) {
    const T* g = grad_out + static_cast<size_t>(oi) * 2 * len * inner;
    T* dst = grad_in + static_cast<size_t>(oi) * len * inner;
    for (size_t i = 0; i < len; ++i) {
      T* d = dst + i * inner;
      const T* even = g + (2 * i) * inner;
      const T* odd = g + (2 * i + 1) * inner;
      // Output samples 2i-1 and 2i+2 reach i with weight 1/4 (or clamp onto it at edges).
      const T* left = i == 0 ? even : g + (2 * i - 1) * inner;
      const T* right = i + 1 == len ? odd : g + (2 * i + 2) * inner;
      for (size_t q = 0; q < inner; ++q) {
        d[q] = T(0.75) * even[q] + T(0.75) * odd[q] + T(0.25) * left[q] + T(0.25) * right[q];
      }
    }
  }
}

}  // namespace

Conv3dGeometry Conv3dGeometry::make(const Shape& input, const Shape& kernel, std::size_t stride,
                                    std::size_t pad) {
  if (input.size() != 5) throw ShapeError("conv3d: input must be [N,C,D,H,W], got " + to_string(input));
  if (kernel.size() != 5) {
    throw ShapeError("conv3d: kernel must be [F,C,kd,kh,kw], got " + to_string(kernel));
  }
  if (input[1] != kernel[1]) {
    throw ShapeError("conv3d: input has " + std::to_string(input[1]) + " channels, kernel expects " +
                     std::to_string(kernel[1]));
  }
  if (stride == 0) throw ShapeError("conv3d: stride must be >= 1");
  Conv3dGeometry g;
  g.batch = input[0];
  g.channels = input[1];
  g.depth = input[2];
  g.height = input[3];
  g.width = input[4];
  g.filters = kernel[0];
  g.kd = kernel[2];
  g.kh = kernel[3];
  g.kw = kernel[4];
  g.stride = stride;
  g.pad = pad;
  const std::array<std::size_t, 3> extent{g.depth, g.height, g.width};
  const std::array<std::size_t, 3> k{g.kd, g.kh, g.kw};
  std::array<std::size_t, 3> out{};
  for (std::size_t a = 0; a < 3; ++a) {
    if (k[a] == 0 || k[a] > extent[a] + 2 * pad) {
      throw ShapeError("conv3d: kernel " + to_string(kernel) + " does not fit padded input " +
                       to_string(input) + " (pad " + std::to_string(pad) + ")");
    }
    out[a] = (extent[a] + 2 * pad - k[a]) / stride + 1;
  }
  g.out_d = out[0];
  g.out_h = out[1];
  g.out_w = out[2];
  return g;
}

template <typename T>
void conv3d_forward(const Conv3dGeometry& g, const T* input, const T* kernel, T* output) {
  const auto ch = chunking<T>(g);
  const size_t ov = g.out_volume();
  std::vector<T> cols(g.patch() * ch.width);
  std::vector<T> out(g.filters * ch.width);
  for (size_t n = 0; n < g.batch; ++n) {
    for (size_t c = 0; c < ch.count; ++c) {
      const size_t p0 = c * ch.width;
      const size_t np = std::min(ch.width, ov - p0);
      const ChunkCoords cc(g, p0, np);
      im2col_chunk(g, input + n * g.channels * g.in_volume(), cc, ch.width, cols.data());
      gemm_chunk(g.filters, g.patch(), ch.width, kernel, g.patch(), size_t{1}, cols.data(), out.data());
      T* dst = output + n * g.filters * ov;
      for (size_t f = 0; f < g.filters; ++f) std::copy_n(out.data() + f * ch.width, np, dst + f * ov + p0);
    }
  }
}

template <typename T>
void conv3d_backward_input(const Conv3dGeometry& g, const T* kernel, const T* grad_out,
                           T* grad_input) {
  const auto ch = chunking<T>(g);
  const size_t ov = g.out_volume();
  std::vector<T> go(g.filters * ch.width);
  std::vector<T> cols(g.patch() * ch.width);
  for (size_t n = 0; n < g.batch; ++n) {
    for (size_t c = 0; c < ch.count; ++c) {
      const size_t p0 = c * ch.width;
      const size_t np = std::min(ch.width, ov - p0);
      gather_chunk(g.filters, ov, p0, np, ch.width, grad_out + n * g.filters * ov, go.data());
      // cols[k, j] = sum_f W[f, k] * grad_out[f, j]
      gemm_chunk(g.patch(), g.filters, ch.width, kernel, size_t{1}, g.patch(), go.data(), cols.data());
      col2im_chunk_add(g, cols.data(), ChunkCoords(g, p0, np), ch.width,
                       grad_input + n * g.channels * g.in_volume());
    }
  }
}

template <typename T>
void conv3d_backward_kernel(const Conv3dGeometry& g, const T* input, const T* grad_out,
                            T* grad_kernel) {
  const auto ch = chunking<T>(g);
  const size_t ov = g.out_volume();
  std::fill(grad_kernel, grad_kernel + g.filters * g.patch(), T{0});
  std::vector<T> go(g.filters * ch.width);
  std::vector<T> cols(g.patch() * ch.width);
  for (size_t n = 0; n < g.batch; ++n) {
    for (size_t c = 0; c < ch.count; ++c) {
      const size_t p0 = c * ch.width;
      const size_t np = std::min(ch.width, ov - p0);
      gather_chunk(g.filters, ov, p0, np, ch.width, grad_out + n * g.filters * ov, go.data());
      im2col_chunk(g, input + n * g.channels * g.in_volume(), ChunkCoords(g, p0, np), ch.width, cols.data());
      gemm_nt_chunk(g.filters, g.patch(), ch.width, go.data(), cols.data(), grad_kernel);
    }
  }
}

template <typename T>
void dense_forward(std::size_t n, std::size_t k, std::size_t m, const T* input, const T* weight,
                   const T* bias, T* output) {
  for (size_t r = 0; r < n; ++r) {
    T* out = output + r * m;
    for (size_t j = 0; j < m; ++j) out[j] = bias ? bias[j] : T{0};
    for (size_t i = 0; i < k; ++i) {
      const T x = input[r * k + i];
      const T* w = weight + i * m;
      for (size_t j = 0; j < m; ++j) out[j] += x * w[j];
    }
  }
}

template <typename T>
void max_pool3d_forward(std::size_t planes, std::size_t d, std::size_t h, std::size_t w,
                        const T* input, T* output, std::size_t* argmax) {
  const size_t od = d / 2, oh = h / 2, ow = w / 2;
#pragma omp parallel for schedule(static)
  for (Index pi = 0; pi < static_cast<Index>(planes); ++pi) {
    const auto p = static_cast<size_t>(pi);
    const size_t in_base = p * d * h * w;
    const size_t out_base = p * od * oh * ow;
    for (size_t z = 0; z < od; ++z) {
      for (size_t y = 0; y < oh; ++y) {
        for (size_t x = 0; x < ow; ++x) {
          size_t best = in_base + ((2 * z) * h + 2 * y) * w + 2 * x;
          T best_v = input[best];
          for (size_t a = 0; a < 2; ++a) {
            for (size_t b = 0; b < 2; ++b) {
              for (size_t c = 0; c < 2; ++c) {
                const size_t idx = in_base + ((2 * z + a) * h + 2 * y + b) * w + 2 * x + c;
                // Strict comparison: the first maximum in scan order wins ties.
                if (input[idx] > best_v) {
                  best_v = input[idx];
                  best = idx;
                }
              }
            }
          }
          const size_t o = out_base + (z * oh + y) * ow + x;
          output[o] = best_v;
          argmax[o] = best;
        }
      }
    }
  }
}

template <typename T>
void upsample_nearest_forward(std::size_t planes, std::size_t d, std::size_t h, std::size_t w,
                              const T* input, T* output) {
#pragma omp parallel for schedule(static)
  for (Index pi = 0; pi < static_cast<Index>(planes); ++pi) {
    const auto p = static_cast<size_t>(pi);
    const T* src = input + p * d * h * w;
    T* dst = output + p * 8 * d * h * w;
    for (size_t z = 0; z < 2 * d; ++z) {
      for (size_t y = 0; y < 2 * h; ++y) {
        const T* row = src + ((z / 2) * h + y / 2) * w;
        T* out = dst + (z * 2 * h + y) * 2 * w;
        for (size_t x = 0; x < 2 * w; ++x) out[x] = row[x / 2];
      }
    }
  }
}

template <typename T>
void upsample_nearest_backward(std::size_t planes, std::size_t d, std::size_t h, std::size_t w,
                               const T* grad_out, T* grad_input) {
#pragma omp parallel for schedule(static)
  for (Index pi = 0; pi < static_cast<Index>(planes); ++pi) {
    const auto p = static_cast<size_t>(pi);
    const T* src = grad_out + p * 8 * d * h * w;
    T* dst = grad_input + p * d * h * w;
    for (size_t z = 0; z < d; ++z) {
      for (size_t y = 0; y < h; ++y) {
        for (size_t x = 0; x < w; ++x) {
          T s{0};
          for (size_t a = 0; a < 2; ++a) {
            for (size_t b = 0; b < 2; ++b) {
              const T* row = src + ((2 * z + a) * 2 * h + 2 * y + b) * 2 * w + 2 * x;
              s += row[0];
              s += row[1];
            }
          }
          dst[(z * h + y) * w + x] = s;
        }
      }
    }
  }
}

template <typename T>
void upsample_trilinear_forward(std::size_t planes, std::size_t d, std::size_t h, std::size_t w,
                                const T* input, T* output) {
  std::vector<T> a(planes * d * h * 2 * w);
  std::vector<T> b(planes * d * 2 * h * 2 * w);
  upsample_axis(planes * d * h, w, size_t{1}, input, a.data());
  upsample_axis(planes * d, h, 2 * w, a.data(), b.data());
  upsample_axis(planes, d, 4 * h * w, b.data(), output);
}

template <typename T>
void upsample_trilinear_backward(std::size_t planes, std::size_t d, std::size_t h, std::size_t w,
                                 const T* grad_out, T* grad_input) {
  std::vector<T> b(planes * d * 2 * h * 2 * w);
  std::vector<T> a(planes * d * h * 2 * w);
  upsample_axis_adjoint(planes, d, 4 * h * w, grad_out, b.data());
  upsample_axis_adjoint(planes * d, h, 2 * w, b.data(), a.data());
  upsample_axis_adjoint(planes * d * h, w, size_t{1}, a.data(), grad_input);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

namespace reference {

template <typename T>
void conv3d_forward(const Conv3dGeometry& g, const T* input, const T* kernel, T* output) {
  for (size_t n = 0; n < g.batch; ++n) {
    for (size_t f = 0; f < g.filters; ++f) {
      for (size_t z = 0; z < g.out_d; ++z) {
        for (size_t y = 0; y < g.out_h; ++y) {
          for (size_t x = 0; x < g.out_w; ++x) {
            T s{0};
            for (size_t c = 0; c < g.channels; ++c) {
              for (size_t a = 0; a < g.kd; ++a) {
                for (size_t b = 0; b < g.kh; ++b) {
                  for (size_t e = 0; e < g.kw; ++e) {
                    const auto iz = static_cast<Index>(z * g.stride + a) - static_cast<Index>(g.pad);
                    const auto iy = static_cast<Index>(y * g.stride + b) - static_cast<Index>(g.pad);
                    const auto ix = static_cast<Index>(x * g.stride + e) - static_cast<Index>(g.pad);
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= static_cast<Index>(g.depth) ||
                        iy >= static_cast<Index>(g.height) || ix >= static_cast<Index>(g.width)) {
                      continue;
                    }
                    const T v = input[(((n * g.channels + c) * g.depth + static_cast<size_t>(iz)) *
                                           g.height +
                                       static_cast<size_t>(iy)) *
                                          g.width +
                                      static_cast<size_t>(ix)];
                    const T k = kernel[(((f * g.channels + c) * g.kd + a) * g.kh + b) * g.kw + e];
                    s += v * k;
                  }
                }
              }
            }
            output[(((n * g.filters + f) * g.out_d + z) * g.out_h + y) * g.out_w + x] = s;
          }
        }
      }
    }
  }
}

template <typename T>
void conv3d_backward_input(const Conv3dGeometry& g, const T* kernel, const T* grad_out,
                           T* grad_input) {
  for (size_t n = 0; n < g.batch; ++n) {
    for (size_t f = 0; f < g.filters; ++f) {
      for (size_t z = 0; z < g.out_d; ++z) {
        for (size_t y = 0; y < g.out_h; ++y) {
          for (size_t x = 0; x < g.out_w; ++x) {
            const T go = grad_out[(((n * g.filters + f) * g.out_d + z) * g.out_h + y) * g.out_w + x];
            for (size_t c = 0; c < g.channels; ++c) {
              for (size_t a = 0; a < g.kd; ++a) {
                for (size_t b = 0; b < g.kh; ++b) {
                  for (size_t e = 0; e < g.kw; ++e) {
                    const auto iz = static_cast<Index>(z * g.stride + a) - static_cast<Index>(g.pad);
                    const auto iy = static_cast<Index>(y * g.stride + b) - static_cast<Index>(g.pad);
                    const auto ix = static_cast<Index>(x * g.stride + e) - static_cast<Index>(g.pad);
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= static_cast<Index>(g.depth) ||
                        iy >= static_cast<Index>(g.height) || ix >= static_cast<Index>(g.width)) {
                      continue;
                    }
                    grad_input[(((n * g.channels + c) * g.depth + static_cast<size_t>(iz)) *
                                    g.height +
                                static_cast<size_t>(iy)) *
                                   g.width +
                               static_cast<size_t>(ix)] +=
                        go * kernel[(((f * g.channels + c) * g.kd + a) * g.kh + b) * g.kw + e];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv3d_backward_kernel(const Conv3dGeometry& g, const T* input, const T* grad_out,
                            T* grad_kernel) {
  std::fill(grad_kernel, grad_kernel + g.filters * g.patch(), T{0});
  for (size_t n = 0; n < g.batch; ++n) {
    for (size_t f = 0; f < g.filters; ++f) {
      for (size_t z = 0; z < g.out_d; ++z) {
        for (size_t y = 0; y < g.out_h; ++y) {
          for (size_t x = 0; x < g.out_w; ++x) {
            const T go = grad_out[(((n * g.filters + f) * g.out_d + z) * g.out_h + y) * g.out_w + x];
            for (size_t c = 0; c < g.channels; ++c) {
              for (size_t a = 0; a < g.kd; ++a) {
                for (size_t b = 0; b < g.kh; ++b) {
                  for (size_t e = 0; e < g.kw; ++e) {
                    const auto iz = static_cast<Index>(z * g.stride + a) - static_cast<Index>(g.pad);
                    const auto iy = static_cast<Index>(y * g.stride + b) - static_cast<Index>(g.pad);
                    const auto ix = static_cast<Index>(x * g.stride + e) - static_cast<Index>(g.pad);
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= static_cast<Index>(g.depth) ||
                        iy >= static_cast<Index>(g.height) || ix >= static_cast<Index>(g.width)) {
                      continue;
                    }
                    grad_kernel[(((f * g.channels + c) * g.kd + a) * g.kh + b) * g.kw + e] +=
                        go * input[(((n * g.channels + c) * g.depth + static_cast<size_t>(iz)) *
                                        g.height +
                                    static_cast<size_t>(iy)) *
                                       g.width +
                                   static_cast<size_t>(ix)];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace reference

#define TTVI_INSTANTIATE_KERNELS(T)                                                                \
  template void conv3d_forward<T>(const Conv3dGeometry&, const T*, const T*, T*);                \
  template void conv3d_backward_input<T>(const Conv3dGeometry&, const T*, const T*, T*);         \
  template void conv3d_backward_kernel<T>(const Conv3dGeometry&, const T*, const T*, T*);        \
  template void dense_forward<T>(std::size_t, std::size_t, std::size_t, const T*, const T*,      \
                                 const T*, T*);                                                  \
  template void max_pool3d_forward<T>(std::size_t, std::size_t, std::size_t, std::size_t,        \
                                      const T*, T*, std::size_t*);                               \
  template void upsample_nearest_forward<T>(std::size_t, std::size_t, std::size_t, std::size_t,  \
                                            const T*, T*);                                       \
  template void upsample_nearest_backward<T>(std::size_t, std::size_t, std::size_t, std::size_t, \
                                             const T*, T*);                                      \
  template void upsample_trilinear_forward<T>(std::size_t, std::size_t, std::size_t,             \
                                              std::size_t, const T*, T*);                        \
  template void upsample_trilinear_backward<T>(std::size_t, std::size_t, std::size_t,            \
                                               std::size_t, const T*, T*);                       \
  template void reference::conv3d_forward<T>(const Conv3dGeometry&, const T*, const T*, T*);     \
  template void reference::conv3d_backward_input<T>(const Conv3dGeometry&, const T*, const T*,   \
                                                    T*);                                         \
  template void reference::conv3d_backward_kernel<T>(const Conv3dGeometry&, const T*, const T*,  \
                                                     T*);

TTVI_INSTANTIATE_KERNELS(float)
TTVI_INSTANTIATE_KERNELS(double)

#undef TTVI_INSTANTIATE_KERNELS

}  // namespace ttvi::kernels
