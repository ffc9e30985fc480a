#include <gtest/gtest.h>

#include <set>

#include "test_support.hpp"
#include "ttvi/nets.hpp"

namespace ttvi {
namespace {

using testing::random_tensor;
using testing::tiny_arch;

TEST(Arch, DefaultFeatureShape) {
  const ArchConfig arch;
  EXPECT_EQ(arch.feature_shape(1), (Shape{1, 64, 4, 4, 4}));
  const auto params = init_params<float>(arch, 0);
  const auto feat = extract(params, Tensor<float>({32, 32, 32}, 0.5f));
  EXPECT_EQ(feat.features.shape(), (Shape{1, 64, 4, 4, 4}));
}

TEST(Arch, RejectsInconsistentConfigs) {
  auto a = tiny_arch();
  a.interp_channels = {4};
  EXPECT_THROW(a.validate(), ContractError);
  a = tiny_arch();
  a.volume = {8, 6, 8};
  EXPECT_THROW(a.validate(), ContractError);
  a = tiny_arch();
  a.pooled_stages = 3;
  EXPECT_THROW(a.validate(), ContractError);
}

TEST(ParamSet, PartitionsAreDisjointAndCoverEveryTensor) {
  const auto p = init_params<float>(ArchConfig{}, 1);
  std::set<std::string> names;
  std::size_t total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_TRUE(names.insert(p[i].name).second) << p[i].name;
    const auto prefix = p[i].name.substr(0, p[i].name.find('.'));
    const auto expected = prefix == "f" ? Partition::extractor
                          : prefix == "h" ? Partition::interpolator
                          : prefix == "g_rot" ? Partition::rotation_head
                                              : Partition::mae_head;
    EXPECT_EQ(p[i].partition, expected) << p[i].name;
  }
  for (auto part : kAllPartitions) total += p.scalar_count(part);
  EXPECT_EQ(total, p.scalar_count());
}

TEST(ParamSet, CopiesAreDeep) {
  const auto a = init_params<float>(tiny_arch(), 2);
  auto b = a;
  b.value(0)[0] += 1.0f;
  EXPECT_NE(a.value(0)[0], b.value(0)[0]);
  EXPECT_FALSE(a == b);
}

TEST(ParamSet, LookupByName) {
  const auto p = init_params<float>(tiny_arch(), 3);
  EXPECT_EQ(p[p.index_of("h.out.weight")].partition, Partition::interpolator);
  EXPECT_FALSE(p.find("nope").has_value());
  EXPECT_THROW(p.index_of("nope"), ContractError);
  EXPECT_EQ(parse_partition(partition_name(Partition::mae_head)), Partition::mae_head);
}

TEST(Init, IsSeededWithZeroBiasesAndZeroResidualLayer) {
  const auto a = init_params<float>(tiny_arch(), 4);
  EXPECT_EQ(a, init_params<float>(tiny_arch(), 4));
  EXPECT_FALSE(a == init_params<float>(tiny_arch(), 5));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& t = a.value(i);
    const bool zero = t.rank() == 1 || a[i].name == "h.out.weight";
    if (!zero) continue;
    for (float v : t.data()) EXPECT_EQ(v, 0.f) << a[i].name;
  }
  const auto& w = a.get("f.conv1.weight");
  const float bound = 1.0f / std::sqrt(static_cast<float>(w.size() / w.dim(0)));
  for (float v : w.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Extract, ZeroInputGivesZeroFeatures) {
  const auto p = init_params<float>(tiny_arch(), 6);
  const auto f = extract(p, Tensor<float>({8, 8, 8}));
  for (float v : f.features.data()) EXPECT_EQ(v, 0.f);
}

TEST(Extract, DeterministicAcrossCopies) {
  const auto p = init_params<float>(tiny_arch(), 7);
  const auto q = p;
  const auto x = random_tensor<float>({8, 8, 8}, 1, 0, 1);
  EXPECT_EQ(extract(p, x).features, extract(q, x).features);
}

TEST(Extract, WrongSizeIsShapeError) {
  const auto p = init_params<float>(tiny_arch(), 8);
  EXPECT_THROW(extract(p, Tensor<float>({8, 8, 4})), ShapeError);
}

TEST(Interpolate, UntrainedOutputIsLinearBlend) {
  const auto p = init_params<float>(tiny_arch(), 9);
  const auto i0 = random_tensor<float>({8, 8, 8}, 2, 0, 1);
  const auto i1 = random_tensor<float>({8, 8, 8}, 3, 0, 1);
  for (double t : {0.25, 0.5, 0.9}) {
    const auto y = interpolate(p, extract(p, i0), extract(p, i1), t);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 8, 8, 8}));
    for (std::size_t k = 0; k < y.size(); ++k) {
      EXPECT_NEAR(y[k], (1.0 - t) * i0[k] + t * i1[k], 1e-6);
    }
  }
}

TEST(Interpolate, EqualFramesAtMidpointReturnTheFrame) {
  const auto p = init_params<float>(tiny_arch(), 10);
  const auto v = random_tensor<float>({8, 8, 8}, 4, 0, 1);
  const auto f = extract(p, v);
  const auto y = interpolate(p, f, f, 0.5);
  for (std::size_t k = 0; k < y.size(); ++k) EXPECT_EQ(y[k], v[k]);
}

TEST(Interpolate, TimeOutsideOpenIntervalIsDomainError) {
  const auto p = init_params<float>(tiny_arch(), 11);
  const auto f = extract(p, Tensor<float>({8, 8, 8}));
  EXPECT_THROW(interpolate(p, f, f, 0.0), DomainError);
  EXPECT_THROW(interpolate(p, f, f, 1.0), DomainError);
  EXPECT_THROW(interpolate(p, f, f, -0.2), DomainError);
}

TEST(Interpolate, NonZeroResidualChangesOutputAndStaysFinite) {
  auto p = init_params<float>(tiny_arch(), 12);
  auto& w = p.value(p.index_of("h.out.weight"));
  w = random_tensor<float>(w.shape(), 5);
  const auto i0 = random_tensor<float>({8, 8, 8}, 6, 0, 1);
  const auto y = interpolate(p, extract(p, i0), extract(p, i0), 0.5);
  EXPECT_TRUE(y.all_finite());
  EXPECT_FALSE(y == i0.reshaped({1, 1, 8, 8, 8}));
}

TEST(RotationHead, ZeroHeadGivesUniformPosterior) {
  auto p = init_params<float>(tiny_arch(), 13);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].partition == Partition::rotation_head) p.value(i).fill(0.f);
  }
  const auto logits = predict_rotation(p, extract(p, random_tensor<float>({8, 8, 8}, 7, 0, 1)));
  ASSERT_EQ(logits.shape(), (Shape{1, 4}));
  for (float v : logits.data()) EXPECT_EQ(v, 0.f);
  ag::Graph<float> g;
  const auto prob = g.value(ag::softmax(g, g.constant(logits)));
  for (float v : prob.data()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(RotationHead, LogitsAreFinite) {
  const auto p = init_params<float>(tiny_arch(), 14);
  const auto logits = predict_rotation(p, extract(p, random_tensor<float>({8, 8, 8}, 8, 0, 1)));
  EXPECT_TRUE(logits.all_finite());
}

TEST(MaeHead, ReconstructionHasInputShapeAndIsDeterministic) {
  for (const auto& arch : {tiny_arch(), ArchConfig{}}) {
    const auto p = init_params<float>(arch, 15);
    const auto x = random_tensor<float>({arch.volume[0], arch.volume[1], arch.volume[2]}, 9, 0, 1);
    const auto a = reconstruct(p, extract(p, x));
    EXPECT_EQ(a.shape(), (Shape{1, 1, arch.volume[0], arch.volume[1], arch.volume[2]}));
    EXPECT_EQ(a, reconstruct(p, extract(p, x)));
  }
}

TEST(ParamSet, CastRoundTripsThroughDouble) {
  const auto p = init_params<float>(tiny_arch(), 16);
  EXPECT_EQ(p.cast<double>().cast<float>(), p);
}

}  // namespace
}  // namespace ttvi
