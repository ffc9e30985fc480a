// Serial reference kernels vs. the OpenMP production kernels on the conv
// layers that dominate a training step.
//
//   ./bench_kernels --benchmark_counters_tabular=true

#include <algorithm>
#include <cstddef>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "ttvi/kernels.hpp"

namespace {

using ttvi::kernels::Conv3dGeometry;

struct Layer {
  std::size_t c, f, extent;
};

// (in channels, out channels, spatial extent) of representative layers.
constexpr Layer kLayers[] = {{1, 16, 32}, {16, 32, 16}, {32, 64, 8}, {64, 32, 8}, {8, 1, 32}};

struct Fixture {
  Conv3dGeometry geom;
  std::vector<float> input, kernel, grad_out, out;

  explicit Fixture(const Layer& layer) {
    const std::size_t e = layer.extent;
    geom = Conv3dGeometry::make({2, layer.c, e, e, e}, {layer.f, layer.c, 3, 3, 3}, 1, 1);
    std::mt19937 rng(7);
    std::uniform_real_distribution<float> u(-1.f, 1.f);
    auto fill = [&](std::vector<float>& v, std::size_t n) {
      v.resize(n);
      for (auto& x : v) x = u(rng);
    };
    fill(input, geom.batch * geom.channels * geom.in_volume());
    fill(kernel, geom.filters * geom.patch());
    fill(grad_out, geom.batch * geom.filters * geom.out_volume());
  }

  double flops() const {
    return 2.0 * static_cast<double>(geom.batch * geom.filters * geom.out_volume() * geom.patch());
  }
};

template <bool Reference>
void BM_ConvForward(benchmark::State& state) {
  Fixture fx(kLayers[state.range(0)]);
  fx.out.resize(fx.grad_out.size());
  for (auto _ : state) {
    if constexpr (Reference) {
      ttvi::kernels::reference::conv3d_forward(fx.geom, fx.input.data(), fx.kernel.data(), fx.out.data());
    } else {
      ttvi::kernels::conv3d_forward(fx.geom, fx.input.data(), fx.kernel.data(), fx.out.data());
    }
    benchmark::DoNotOptimize(fx.out.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(fx.flops() * 1e-9 * static_cast<double>(state.iterations()), benchmark::Counter::kIsRate);
}

template <bool Reference>
void BM_ConvBackwardInput(benchmark::State& state) {
  Fixture fx(kLayers[state.range(0)]);
  fx.out.assign(fx.input.size(), 0.f);
  for (auto _ : state) {
    std::fill(fx.out.begin(), fx.out.end(), 0.f);
    if constexpr (Reference) {
      ttvi::kernels::reference::conv3d_backward_input(fx.geom, fx.kernel.data(), fx.grad_out.data(), fx.out.data());
    } else {
      ttvi::kernels::conv3d_backward_input(fx.geom, fx.kernel.data(), fx.grad_out.data(), fx.out.data());
    }
    benchmark::DoNotOptimize(fx.out.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(fx.flops() * 1e-9 * static_cast<double>(state.iterations()), benchmark::Counter::kIsRate);
}

template <bool Reference>
void BM_ConvBackwardKernel(benchmark::State& state) {
  Fixture fx(kLayers[state.range(0)]);
  fx.out.resize(fx.kernel.size());
  for (auto _ : state) {
    if constexpr (Reference) {
      ttvi::kernels::reference::conv3d_backward_kernel(fx.geom, fx.input.data(), fx.grad_out.data(), fx.out.data());
    } else {
      ttvi::kernels::conv3d_backward_kernel(fx.geom, fx.input.data(), fx.grad_out.data(), fx.out.data());
    }
    benchmark::DoNotOptimize(fx.out.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(fx.flops() * 1e-9 * static_cast<double>(state.iterations()), benchmark::Counter::kIsRate);
}

constexpr int kLayerCount = static_cast<int>(std::size(kLayers));

BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/reference")->DenseRange(0, kLayerCount - 1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/openmp")->DenseRange(0, kLayerCount - 1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<true>)->Name("conv_backward_input/reference")->DenseRange(0, kLayerCount - 1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<false>)->Name("conv_backward_input/openmp")->DenseRange(0, kLayerCount - 1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardKernel<true>)->Name("conv_backward_kernel/reference")->DenseRange(0, kLayerCount - 1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardKernel<false>)->Name("conv_backward_kernel/openmp")->DenseRange(0, kLayerCount - 1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
