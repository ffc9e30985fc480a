#include "ttvi/metrics.hpp"

#include <array>
#include <cmath>

namespace ttvi::metrics {

namespace {

using std::size_t;

std::array<size_t, 3> trailing_extent(const Shape& s, const char* op) {
  if (s.size() < 3) throw ShapeError(std::string(op) + ": need a volume, got " + to_string(s));
  size_t lead = 1;
  for (size_t a = 0; a + 3 < s.size(); ++a) lead *= s[a];
  if (lead != 1) throw ShapeError(std::string(op) + ": expected a single volume, got " + to_string(s));
  return {s[s.size() - 3], s[s.size() - 2], s[s.size() - 1]};
}

// Summed-volume table with a zero border: table[(z+1, y+1, x+1)] = sum over [0..z, 0..y, 0..x].
class BoxSums {
 public:
  template <typename F>
  BoxSums(std::array<size_t, 3> e, F&& value) : d_(e[0] + 1), h_(e[1] + 1), w_(e[2] + 1), t_(d_ * h_ * w_, 0.0) {
    for (size_t z = 1; z < d_; ++z) {
      for (size_t y = 1; y < h_; ++y) {
        for (size_t x = 1; x < w_; ++x) {
          at(z, y, x) = value(((z - 1) * e[1] + (y - 1)) * e[2] + (x - 1)) + at(z - 1, y, x) + at(z, y - 1, x) +
                        at(z, y, x - 1) - at(z - 1, y - 1, x) - at(z - 1, y, x - 1) - at(z, y - 1, x - 1) +
                        at(z - 1, y - 1, x - 1);
        }
      }
    }
  }

  // Sum over the cube [z, z+n) x [y, y+n) x [x, x+n).
  double box(size_t z, size_t y, size_t x, size_t n) const {
    const size_t z1 = z + n, y1 = y + n, x1 = x + n;
    return at(z1, y1, x1) - at(z, y1, x1) - at(z1, y, x1) - at(z1, y1, x) + at(z, y, x1) + at(z, y1, x) +
           at(z1, y, x) - at(z, y, x);
  }

 private:
  double& at(size_t z, size_t y, size_t x) { return t_[(z * h_ + y) * w_ + x]; }
  double at(size_t z, size_t y, size_t x) const { return t_[(z * h_ + y) * w_ + x]; }

  size_t d_, h_, w_;
  std::vector<double> t_;
};

}  // namespace

double psnr(const Tensor<float>& pred, const Tensor<float>& truth, double data_range) {
  require_same_shape(pred.shape(), truth.shape(), "psnr");
  double se = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(truth[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double ncc(const Tensor<float>& pred, const Tensor<float>& truth) {
  require_same_shape(pred.shape(), truth.shape(), "ncc");
  const auto n = static_cast<double>(pred.size());
  double mp = 0.0, mt = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    mp += pred[i];
    mt += truth[i];
  }
  mp /= n;
  mt /= n;
  double cov = 0.0, vp = 0.0, vt = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double a = pred[i] - mp, b = truth[i] - mt;
    cov += a * b;
    vp += a * a;
    vt += b * b;
  }
  if (vp == 0.0 || vt == 0.0) throw DomainError("ncc: undefined for a constant volume");
  return std::clamp(cov / std::sqrt(vp * vt), -1.0, 1.0);
}

double ssim(const Tensor<float>& pred, const Tensor<float>& truth, const SsimOptions& options) {
  require_same_shape(pred.shape(), truth.shape(), "ssim");
  const auto e = trailing_extent(pred.shape(), "ssim");
  const size_t w = options.window;
  if (w == 0 || e[0] < w || e[1] < w || e[2] < w) {
    throw ShapeError("ssim: volume " + to_string(Shape{e[0], e[1], e[2]}) + " smaller than window " +
                     std::to_string(w));
  }
  const double c1 = std::pow(options.k1 * options.data_range, 2);
  const double c2 = std::pow(options.k2 * options.data_range, 2);
  const float* p = pred.raw();
  const float* t = truth.raw();
  const BoxSums sx(e, [p](size_t i) { return static_cast<double>(p[i]); });
  const BoxSums sy(e, [t](size_t i) { return static_cast<double>(t[i]); });
  const BoxSums sxx(e, [p](size_t i) { return static_cast<double>(p[i]) * p[i]; });
  const BoxSums syy(e, [t](size_t i) { return static_cast<double>(t[i]) * t[i]; });
  const BoxSums sxy(e, [p, t](size_t i) { return static_cast<double>(p[i]) * t[i]; });
  const double n = static_cast<double>(w * w * w);
  double total = 0.0;
  size_t windows = 0;
  for (size_t z = 0; z + w <= e[0]; ++z) {
    for (size_t y = 0; y + w <= e[1]; ++y) {
      for (size_t x = 0; x + w <= e[2]; ++x) {
        const double mx = sx.box(z, y, x, w) / n;
        const double my = sy.box(z, y, x, w) / n;
        const double vx = sxx.box(z, y, x, w) / n - mx * mx;
        const double vy = syy.box(z, y, x, w) / n - my * my;
        const double cxy = sxy.box(z, y, x, w) / n - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
    }
  }
  return total / static_cast<double>(windows);
}

double nmse(const Tensor<float>& pred, const Tensor<float>& truth) {
  require_same_shape(pred.shape(), truth.shape(), "nmse");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(truth[i]);
    num += d * d;
    den += static_cast<double>(truth[i]) * truth[i];
  }
  if (den == 0.0) throw DomainError("nmse: undefined for an all-zero reference");
  return 100.0 * num / den;
}

Tensor<float> linear_blend_baseline(const Tensor<float>& i0, const Tensor<float>& i1, double t) {
  require_same_shape(i0.shape(), i1.shape(), "linear_blend_baseline");
  if (!(t > 0.0 && t < 1.0)) throw DomainError("linear_blend_baseline: t must lie in (0,1)");
  Tensor<float> out(i0.shape());
  const auto b = static_cast<float>(t);
  for (size_t i = 0; i < out.size(); ++i) out[i] = i0[i] + b * (i1[i] - i0[i]);
  return out;
}

MetricReport evaluate(const Tensor<float>& pred, const Tensor<float>& truth) {
  return {psnr(pred, truth), ncc(pred, truth), ssim(pred, truth), nmse(pred, truth)};
}

double metric_value(const MetricReport& r, std::string_view name) {
  if (name == "psnr") return r.psnr;
  if (name == "ncc") return r.ncc;
  if (name == "ssim") return r.ssim;
  if (name == "nmse") return r.nmse;
  throw ContractError("unknown metric '" + std::string(name) + "'");
}

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  // Shifted by the first value so k equal inputs reproduce it exactly.
  double shifted = 0.0;
  for (double v : values) shifted += v - values[0];
  s.mean = values[0] + shifted / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

}  // namespace ttvi::metrics
