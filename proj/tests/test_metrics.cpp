#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "metric_oracles.hpp"
#include "test_support.hpp"
#include "ttvi/metrics.hpp"

namespace ttvi {
namespace {

using namespace metrics;
using testing::random_tensor;
using testing::ssim_oracle;

Tensor<float> volume(std::uint64_t seed, std::size_t e = 12) {
  return random_tensor<float>({e, e, e}, seed, 0.0, 1.0);
}

Tensor<float> with_mse(const Tensor<float>& truth, double mse) {
  // +-sqrt(mse) alternating keeps every squared error equal to mse.
  auto p = truth;
  const float d = static_cast<float>(std::sqrt(mse));
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += (i % 2 ? d : -d);
  return p;
}

TEST(Psnr, IdenticalIsFlaggedInfinite) {
  const auto v = volume(1);
  EXPECT_TRUE(psnr_identical(psnr(v, v)));
}

TEST(Psnr, MatchesTheFormula) {
  const Tensor<float> truth({8, 8, 8}, 0.5f);
  EXPECT_NEAR(psnr(with_mse(truth, 0.01), truth), 20.0, 1e-5);
  EXPECT_NEAR(psnr(with_mse(truth, 1e-4), truth), 40.0, 1e-4);
  EXPECT_NEAR(psnr(with_mse(truth, 0.01), truth, 2.0), 20.0 + 10 * std::log10(4.0), 1e-5);
}

TEST(Psnr, IsSymmetricAndRejectsShapeMismatch) {
  const auto a = volume(2), b = volume(3);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
  EXPECT_THROW(psnr(a, volume(4, 10)), ShapeError);
}

TEST(Psnr, StrictlyDecreasesWithNoise) {
  const auto truth = volume(5);
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.01, 0.02, 0.04, 0.08, 0.16}) {
    auto pred = truth;
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& v : pred.data()) v += static_cast<float>(n(rng));
    const double db = psnr(pred, truth);
    EXPECT_LT(db, prev) << sigma;
    prev = db;
  }
}

TEST(Ncc, IdentityAntiCorrelationAndAffineInvariance) {
  const auto t = volume(6);
  EXPECT_NEAR(ncc(t, t), 1.0, 1e-12);
  auto neg = t, aff = t;
  for (auto& v : neg.data()) v = -v + 3.0f;
  for (auto& v : aff.data()) v = 2.5f * v - 0.7f;
  EXPECT_NEAR(ncc(neg, t), -1.0, 1e-6);
  EXPECT_NEAR(ncc(aff, t), 1.0, 1e-6);
}

TEST(Ncc, BoundedSymmetricAndUndefinedForConstants) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto a = volume(10 + s), b = volume(20 + s);
    const double r = ncc(a, b);
    EXPECT_GE(r, -1.0);
    EXPECT_LE(r, 1.0);
    EXPECT_NEAR(r, ncc(b, a), 1e-6);
  }
  EXPECT_THROW(ncc(Tensor<float>({8, 8, 8}, 0.3f), volume(7, 8)), DomainError);
}

TEST(Ssim, IdentityIsOneAndRandomPairsAreBounded) {
  const auto t = volume(8);
  EXPECT_NEAR(ssim(t, t), 1.0, 1e-12);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const double v = ssim(volume(30 + s), volume(40 + s));
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Ssim, ConstantOffsetOnlyLowersLuminance) {
  const auto t = volume(9);
  auto p = t;
  for (auto& v : p.data()) v += 0.1f;
  const double s = ssim(p, t);
  EXPECT_LT(s, 1.0);
  EXPECT_NEAR(s, ssim_oracle(p, t, 7), 1e-6);
}

TEST(Ssim, MatchesScalarOracleOnRandomPairs) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = volume(50 + s, 10), b = volume(60 + s, 10);
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b, 7), 1e-6) << s;
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-6);
  }
}

TEST(Ssim, VolumeSmallerThanWindowThrows) {
  EXPECT_THROW(ssim(volume(1, 6), volume(2, 6)), ShapeError);
  SsimOptions o;
  o.window = 3;
  EXPECT_NO_THROW(ssim(volume(1, 6), volume(2, 6), o));
}

TEST(Nmse, Examples) {
  const auto t = volume(11);
  EXPECT_EQ(nmse(t, t), 0.0);
  auto twice = t;
  for (auto& v : twice.data()) v *= 2.0f;
  EXPECT_NEAR(nmse(twice, t), 100.0, 1e-9);
  EXPECT_NEAR(nmse(Tensor<float>(t.shape()), t), 100.0, 1e-12);
  EXPECT_THROW(nmse(t, Tensor<float>(t.shape())), DomainError);
}

TEST(Nmse, ZeroExactlyWhenEqual) {
  const auto t = volume(12);
  auto p = t;
  p[100] = std::nextafter(p[100], 2.0f);
  EXPECT_GT(nmse(p, t), 0.0);
  EXPECT_GE(nmse(volume(13), t), 0.0);
}

TEST(LinearBlend, Examples) {
  const auto v = volume(14);
  for (double t : {0.1, 0.5, 0.9}) EXPECT_EQ(linear_blend_baseline(v, v, t), v);
  const auto half = linear_blend_baseline(Tensor<float>({4, 4, 4}, 0.f), Tensor<float>({4, 4, 4}, 1.f), 0.5);
  for (float x : half.data()) EXPECT_EQ(x, 0.5f);
  EXPECT_THROW(linear_blend_baseline(v, v, 1.0), DomainError);
  EXPECT_THROW(linear_blend_baseline(v, volume(1, 4), 0.5), ShapeError);
}

TEST(Report, EvaluateAndNamedAccess) {
  const auto a = volume(15), b = volume(16);
  const auto r = evaluate(a, b);
  EXPECT_EQ(metric_value(r, "psnr"), psnr(a, b));
  EXPECT_EQ(metric_value(r, "ncc"), ncc(a, b));
  EXPECT_EQ(metric_value(r, "ssim"), ssim(a, b));
  EXPECT_EQ(metric_value(r, "nmse"), nmse(a, b));
  EXPECT_THROW(metric_value(r, "lpips"), ContractError);
}

TEST(Summary, PopulationMeanAndStd) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto s = summarize(v);
  EXPECT_EQ(s.count, 4u);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(1.25));
  const std::vector<double> one{7};
  EXPECT_EQ(summarize(one).std, 0.0);
}

}  // namespace
}  // namespace ttvi
