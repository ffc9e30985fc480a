#pragma once

// Volume-pair quality metrics. All accumulation is done in double.

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ttvi/tensor.hpp"

namespace ttvi::metrics {

/// 10 log10(range^2 / MSE). Identical inputs give +infinity.
double psnr(const Tensor<float>& pred, const Tensor<float>& truth, double data_range = 1.0);
inline bool psnr_identical(double db) { return db == std::numeric_limits<double>::infinity(); }

/// Global Pearson correlation over all voxels. Throws DomainError for a
/// constant input.
double ncc(const Tensor<float>& pred, const Tensor<float>& truth);

struct SsimOptions {
  std::size_t window = 7;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Mean SSIM over every fully contained cubic box window of the last three
/// axes (population moments inside each window).
double ssim(const Tensor<float>& pred, const Tensor<float>& truth, const SsimOptions& options = {});

/// 100 * sum (pred - truth)^2 / sum truth^2.
double nmse(const Tensor<float>& pred, const Tensor<float>& truth);

/// (1 - t) * i0 + t * i1, t in (0, 1), evaluated as i0 + t * (i1 - i0) so equal
/// frames come back bit-exactly.
Tensor<float> linear_blend_baseline(const Tensor<float>& i0, const Tensor<float>& i1, double t);

struct MetricReport {
  double psnr = 0.0;
  double ncc = 0.0;
  double ssim = 0.0;
  double nmse = 0.0;
};

MetricReport evaluate(const Tensor<float>& pred, const Tensor<float>& truth);

inline constexpr std::array<const char*, 4> kMetricNames{"psnr", "ncc", "ssim", "nmse"};
double metric_value(const MetricReport& r, std::string_view name);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t count = 0;
};

Summary summarize(std::span<const double> values);

}  // namespace ttvi::metrics
