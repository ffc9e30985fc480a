#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_support.hpp"
#include "ttvi/ssl.hpp"

namespace ttvi {
namespace {

using testing::random_tensor;

TEST(Rotate, ZeroTurnsIsIdentity) {
  const auto v = random_tensor<float>({3, 5, 5}, 1);
  EXPECT_EQ(rotate(v, RotationLabel(0)), v);
}

TEST(Rotate, FourQuarterTurnsIsIdentity) {
  const auto v = random_tensor<float>({2, 1, 3, 6, 6}, 2);
  auto r = v;
  for (int i = 0; i < 4; ++i) r = rotate(r, RotationLabel(1));
  EXPECT_EQ(r, v);
}

TEST(Rotate, QuarterTurnIsCounterClockwise) {
  const Tensor<float> v({1, 1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(rotate(v, RotationLabel(1)), Tensor<float>({1, 1, 1, 2, 2}, {2, 4, 1, 3}));
}

TEST(Rotate, ComposesAsAGroup) {
  const auto v = random_tensor<float>({4, 7, 7}, 3);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      EXPECT_EQ(rotate(rotate(v, RotationLabel(a)), RotationLabel(b)), rotate(v, RotationLabel((a + b) % 4)));
    }
  }
}

TEST(Rotate, PreservesTheMultisetOfValues) {
  const auto v = random_tensor<float>({3, 6, 6}, 4);
  for (int k = 0; k < 4; ++k) {
    auto a = std::vector<float>(v.data().begin(), v.data().end());
    const auto r = rotate(v, RotationLabel(k));
    auto b = std::vector<float>(r.data().begin(), r.data().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(Rotate, NonSquareSliceIsUnsupported) {
  EXPECT_THROW(rotate(Tensor<float>({2, 3, 4}), RotationLabel(1)), ShapeError);
  EXPECT_THROW(RotationLabel(4), DomainError);
  EXPECT_THROW(RotationLabel(-1), DomainError);
}

TEST(OneHot, ExactlyOneOnePerRow) {
  const std::vector<RotationLabel> labels{RotationLabel(2), RotationLabel(0), RotationLabel(3)};
  const auto y = one_hot<float>(labels);
  ASSERT_EQ(y.shape(), (Shape{3, 4}));
  for (std::size_t r = 0; r < 3; ++r) {
    float s = 0;
    for (std::size_t c = 0; c < 4; ++c) s += y[r * 4 + c];
    EXPECT_EQ(s, 1.f);
    EXPECT_EQ(y[r * 4 + static_cast<std::size_t>(labels[r].k())], 1.f);
  }
}

TEST(RotationLoss, UniformPosteriorGivesLogFour) {
  const std::vector<RotationLabel> labels{RotationLabel(1), RotationLabel(3)};
  EXPECT_NEAR(rotation_loss(Tensor<double>({2, 4}, 0.7), one_hot<double>(labels)), std::log(4.0), 1e-12);
  EXPECT_NEAR(std::log(4.0), 1.386294, 1e-6);
}

TEST(RotationLoss, ConfidentCorrectPredictionApproachesZero) {
  const std::vector<RotationLabel> labels{RotationLabel(2)};
  EXPECT_LT(rotation_loss(Tensor<double>({1, 4}, {0, 0, 50, 0}), one_hot<double>(labels)), 1e-20);
}

TEST(RotationLoss, HandComputedTwoRowExample) {
  // Row 0: true class probability 0.5 (logits log 2, 0, 0, log 0 -> use 1/2,1/6,1/6,1/6).
  // Row 1: true class probability 0.25 (uniform).
  const double l = std::log(3.0);
  const Tensor<double> logits({2, 4}, {l, 0, 0, 0, 0, 0, 0, 0});
  const std::vector<RotationLabel> labels{RotationLabel(0), RotationLabel(2)};
  const double expected = (-std::log(0.5) - std::log(0.25)) / 2.0;
  EXPECT_NEAR(expected, 1.039721, 1e-6);
  EXPECT_NEAR(rotation_loss(logits, one_hot<double>(labels)), expected, 1e-12);

  ag::Graph<double> g;
  const auto node = rotation_loss(g, g.constant(logits), one_hot<double>(labels));
  EXPECT_NEAR(g.value(node).item(), expected, 1e-12);
}

TEST(RotationLoss, InvariantToConstantLogitShift) {
  const auto logits = random_tensor<double>({5, 4}, 5, -4, 4);
  const std::vector<RotationLabel> labels{RotationLabel(0), RotationLabel(1), RotationLabel(2), RotationLabel(3),
                                          RotationLabel(1)};
  const auto y = one_hot<double>(labels);
  for (double c : {-7.0, 0.3, 12.0}) {
    auto shifted = logits;
    for (auto& v : shifted.data()) v += c;
    EXPECT_NEAR(rotation_loss(shifted, y), rotation_loss(logits, y), 1e-6);
  }
}

TEST(RotationLoss, IsNonNegativeAndRejectsNonOneHotLabels) {
  const auto logits = random_tensor<double>({3, 4}, 6, -3, 3);
  const std::vector<RotationLabel> labels{RotationLabel(0), RotationLabel(1), RotationLabel(2)};
  EXPECT_GE(rotation_loss(logits, one_hot<double>(labels)), 0.0);
  Tensor<double> bad({3, 4}, 0.0);
  bad[0] = 1;
  bad[1] = 1;
  bad[6] = 1;
  bad[11] = 1;
  EXPECT_THROW(rotation_loss(logits, bad), ContractError);
}

TEST(MakeMask, DefaultGeometryMasksFiftyOneOfSixtyFour) {
  const auto m = make_mask({32, 32, 32}, {8, 8, 8}, 0.8, 1);
  EXPECT_EQ(m.total_patches(), 64u);
  EXPECT_EQ(m.masked_patches.size(), 51u);
}

TEST(MakeMask, IndicesAreSortedUniqueAndInRange) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = make_mask({16, 8, 8}, {4, 4, 2}, 0.37, seed);
    EXPECT_TRUE(std::is_sorted(m.masked_patches.begin(), m.masked_patches.end()));
    EXPECT_EQ(std::adjacent_find(m.masked_patches.begin(), m.masked_patches.end()), m.masked_patches.end());
    for (auto i : m.masked_patches) EXPECT_LT(i, m.total_patches());
    EXPECT_LE(std::abs(static_cast<double>(m.masked_patches.size()) / m.total_patches() - 0.37),
              1.0 / m.total_patches());
  }
}

TEST(MakeMask, RoundsHalfUp) {
  // 0.5 * 3 = 1.5 -> 2 ; 0.25 * 2 = 0.5 -> 1
  EXPECT_EQ(make_mask({12, 4, 4}, {4, 4, 4}, 0.5, 0).masked_patches.size(), 2u);
  EXPECT_EQ(make_mask({8, 4, 4}, {4, 4, 4}, 0.25, 0).masked_patches.size(), 1u);
}

TEST(MakeMask, SeedDeterminesTheSet) {
  EXPECT_EQ(make_mask({32, 32, 32}, {8, 8, 8}, 0.8, 5).masked_patches,
            make_mask({32, 32, 32}, {8, 8, 8}, 0.8, 5).masked_patches);
  EXPECT_NE(make_mask({32, 32, 32}, {8, 8, 8}, 0.8, 5).masked_patches,
            make_mask({32, 32, 32}, {8, 8, 8}, 0.8, 6).masked_patches);
}

TEST(MakeMask, ZeroRatioIsEmptyAndBadGeometryThrows) {
  EXPECT_TRUE(make_mask({32, 32, 32}, {8, 8, 8}, 0.0, 1).masked_patches.empty());
  EXPECT_THROW(make_mask({30, 32, 32}, {8, 8, 8}, 0.8, 1), ShapeError);
  EXPECT_THROW(make_mask({32, 32, 32}, {8, 8, 8}, 1.5, 1), DomainError);
}

TEST(ApplyMask, EmptyMaskIsIdentityAndFullMaskZeroes) {
  const auto v = random_tensor<float>({16, 16, 16}, 7, 0, 1);
  EXPECT_EQ(apply_mask(v, make_mask({16, 16, 16}, {8, 8, 8}, 0.0, 1)), v);
  const auto z = apply_mask(v, make_mask({16, 16, 16}, {8, 8, 8}, 1.0, 1));
  for (float x : z.data()) EXPECT_EQ(x, 0.f);
}

TEST(ApplyMask, OnePatchOfOnesRemovesExactly512) {
  const Tensor<float> ones({32, 32, 32}, 1.f);
  auto spec = make_mask({32, 32, 32}, {8, 8, 8}, 0.0, 0);
  spec.masked_patches = {13};
  const auto m = apply_mask(ones, spec);
  double before = 32.0 * 32 * 32, after = 0;
  for (float x : m.data()) after += x;
  EXPECT_EQ(before - after, 512.0);
}

TEST(ApplyMask, BatchedVolumesShareTheMask) {
  const auto v = random_tensor<float>({2, 1, 8, 8, 8}, 8, 0.1, 1);
  const auto spec = make_mask({8, 8, 8}, {4, 4, 4}, 0.5, 3);
  const auto m = apply_mask(v, spec);
  for (std::size_t i = 0; i < 512; ++i) EXPECT_EQ(m[i] == 0.f, m[512 + i] == 0.f);
  EXPECT_THROW(apply_mask(Tensor<float>({8, 8, 4}), spec), ShapeError);
}

TEST(MaeLoss, ExactAndOffsetExamples) {
  const auto x = random_tensor<float>({8, 8, 8}, 9, 0, 1);
  const auto spec = make_mask({8, 8, 8}, {4, 4, 4}, 0.8, 4);
  EXPECT_EQ(mae_loss(x, x, spec), 0.0);
  auto off = x;
  for (auto& v : off.data()) v += 0.1f;
  EXPECT_NEAR(mae_loss(off, x, spec), 0.01, 1e-7);
  for (std::uint64_t s = 0; s < 5; ++s) {
    EXPECT_NEAR(mae_loss(off, x, make_mask({8, 8, 8}, {4, 4, 4}, 0.3, s)), 0.01, 1e-7);
  }
}

TEST(MaeLoss, IgnoresEverythingOutsideTheMask) {
  const auto x = random_tensor<float>({8, 8, 8}, 10, 0, 1);
  const auto spec = make_mask({8, 8, 8}, {4, 4, 4}, 0.5, 5);
  const auto m = mask_indicator<float>(spec);
  auto recon = random_tensor<float>({8, 8, 8}, 11, 0, 1);
  const double base = mae_loss(recon, x, spec);
  auto changed = recon;
  for (std::size_t i = 0; i < changed.size(); ++i) {
    if (m[i] == 0.f) changed[i] = 1e3f;
  }
  EXPECT_EQ(mae_loss(changed, x, spec), base);

  auto only_outside = x;
  for (std::size_t i = 0; i < only_outside.size(); ++i) {
    if (m[i] == 0.f) only_outside[i] += 5.f;
  }
  EXPECT_EQ(mae_loss(only_outside, x, spec), 0.0);
}

TEST(MaeLoss, GraphAndScalarFormsAgreeAndEmptyMaskThrows) {
  const auto x = random_tensor<double>({2, 1, 8, 8, 8}, 12, 0, 1);
  const auto r = random_tensor<double>({2, 1, 8, 8, 8}, 13, 0, 1);
  const auto spec = make_mask({8, 8, 8}, {4, 4, 4}, 0.8, 6);
  ag::Graph<double> g;
  EXPECT_NEAR(g.value(mae_loss(g, g.constant(r), x, spec)).item(), mae_loss(r, x, spec), 1e-12);
  EXPECT_THROW(mae_loss(r, x, make_mask({8, 8, 8}, {4, 4, 4}, 0.0, 1)), ContractError);
}

}  // namespace
}  // namespace ttvi
