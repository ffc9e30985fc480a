#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ttvi/synth.hpp"

namespace ttvi {
namespace {

namespace fs = std::filesystem;
using namespace synth;

SequenceSpec spec_with(Motion motion, double amplitude, std::uint64_t seed = 3) {
  SequenceSpec s;
  s.motion = motion;
  s.amplitude = amplitude;
  s.seed = seed;
  return s;
}

double mass(const Volume& v) {
  double m = 0;
  for (float x : v.data()) m += x;
  return m;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ttvi_synth_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

class EachMotion : public ::testing::TestWithParam<Motion> {};

TEST_P(EachMotion, IntensitiesStayInUnitInterval) {
  const auto seq = generate_sequence(spec_with(GetParam(), 0.5));
  ASSERT_EQ(seq.frames.size(), 10u);
  for (const auto& f : seq.frames) {
    EXPECT_EQ(f.shape(), (Shape{32, 32, 32}));
    for (float v : f.data()) {
      EXPECT_GE(v, 0.f);
      EXPECT_LE(v, 1.f);
    }
  }
}

TEST_P(EachMotion, ZeroAmplitudeWithoutNoiseIsStatic) {
  auto s = spec_with(GetParam(), 0.0);
  s.noise_floor = 0.0;
  const auto seq = generate_sequence(s);
  for (const auto& f : seq.frames) EXPECT_EQ(f, seq.frames.front());
}

TEST_P(EachMotion, EndpointsDifferWhenMoving) {
  for (double a : {0.05, 0.3}) {
    auto s = spec_with(GetParam(), a);
    s.noise_floor = 0.0;
    const auto seq = generate_sequence(s);
    EXPECT_FALSE(seq.frames.front() == seq.frames.back()) << a;
  }
}

TEST_P(EachMotion, SameSeedIsBitIdenticalAndSeedsDiffer) {
  const auto a = generate_sequence(spec_with(GetParam(), 0.3, 9));
  const auto b = generate_sequence(spec_with(GetParam(), 0.3, 9));
  const auto c = generate_sequence(spec_with(GetParam(), 0.3, 10));
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_FALSE(a.frames == c.frames);
}

INSTANTIATE_TEST_SUITE_P(BothMotions, EachMotion,
                         ::testing::Values(Motion::pulsating_ellipsoid, Motion::translating_blob),
                         [](const auto& info) {
                           return info.param == Motion::pulsating_ellipsoid ? std::string("pulsating")
                                                                            : std::string("translating");
                         });

TEST(Generate, PulsatingMassIsMonotone) {
  auto s = spec_with(Motion::pulsating_ellipsoid, 0.3);
  s.noise_floor = 0.0;
  const auto seq = generate_sequence(s);
  for (std::size_t i = 1; i < seq.frames.size(); ++i) EXPECT_GT(mass(seq.frames[i]), mass(seq.frames[i - 1]));
}

TEST(Generate, FrameTimesAreUniform) {
  auto s = spec_with(Motion::pulsating_ellipsoid, 0.3);
  s.n_frames = 5;
  const auto seq = generate_sequence(s);
  EXPECT_EQ(seq.time_of(0), 0.0);
  EXPECT_EQ(seq.time_of(2), 0.5);
  EXPECT_EQ(seq.time_of(4), 1.0);
}

TEST(Generate, ValidatesTheSpec) {
  auto s = spec_with(Motion::translating_blob, 0.6);
  EXPECT_THROW(generate_sequence(s), DomainError);
  s = spec_with(Motion::translating_blob, -0.1);
  EXPECT_THROW(generate_sequence(s), DomainError);
  s = spec_with(Motion::translating_blob, 0.2);
  s.n_frames = 2;
  EXPECT_THROW(generate_sequence(s), ContractError);
  EXPECT_EQ(parse_motion(motion_name(Motion::translating_blob)), Motion::translating_blob);
  EXPECT_THROW(parse_motion("spinning"), ContractError);
}

TEST(Shift, MagnitudeZeroIsBitExactIdentity) {
  const auto v = generate_sequence(spec_with(Motion::pulsating_ellipsoid, 0.3)).frames[4];
  for (auto kind : {ShiftKind::intensity_gain, ShiftKind::gamma, ShiftKind::gaussian_noise, ShiftKind::gaussian_blur,
                    ShiftKind::bias_field}) {
    EXPECT_EQ(apply_shift(v, {kind, 0.0, 7}), v) << shift_name(kind);
    EXPECT_EQ(parse_shift(shift_name(kind)), kind);
  }
}

TEST(Shift, OutputIsClippedAndSeeded) {
  const auto v = generate_sequence(spec_with(Motion::translating_blob, 0.3)).frames[2];
  for (auto kind : {ShiftKind::intensity_gain, ShiftKind::gamma, ShiftKind::gaussian_noise, ShiftKind::gaussian_blur,
                    ShiftKind::bias_field}) {
    const auto a = apply_shift(v, {kind, 0.4, 5});
    EXPECT_EQ(a, apply_shift(v, {kind, 0.4, 5})) << shift_name(kind);
    EXPECT_FALSE(a == v) << shift_name(kind);
    for (float x : a.data()) {
      EXPECT_GE(x, 0.f);
      EXPECT_LE(x, 1.f);
    }
  }
}

TEST(Shift, GainScalesUnclippedVoxelsExactly) {
  const auto v = generate_sequence(spec_with(Motion::pulsating_ellipsoid, 0.3)).frames[0];
  const double g = 0.3;
  const auto s = apply_shift(v, {ShiftKind::intensity_gain, g, 0});
  std::size_t checked = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] * (1 + g) < 1.0) {
      EXPECT_FLOAT_EQ(s[i], static_cast<float>(v[i] * (1 + g)));
      ++checked;
    } else {
      EXPECT_EQ(s[i], 1.f);
    }
  }
  EXPECT_GT(checked, v.size() / 2);
}

TEST(Shift, NoiseStandardDeviationMatchesMagnitude) {
  Volume v({32, 32, 32}, 0.5f);
  const double sigma = 0.05;
  const auto s = apply_shift(v, {ShiftKind::gaussian_noise, sigma, 11});
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (std::size_t z = 1; z < 31; ++z) {
    for (std::size_t y = 1; y < 31; ++y) {
      for (std::size_t x = 1; x < 31; ++x) {
        const double d = s[(z * 32 + y) * 32 + x] - v[(z * 32 + y) * 32 + x];
        sum += d;
        sq += d * d;
        ++n;
      }
    }
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(sd, sigma, 0.1 * sigma);
}

TEST(Shift, BlurPreservesConstantsAndNegativeMagnitudeIsRejected) {
  Volume v({8, 8, 8}, 0.25f);
  const auto b = apply_shift(v, {ShiftKind::gaussian_blur, 1.5, 0});
  for (float x : b.data()) EXPECT_NEAR(x, 0.25f, 1e-6f);
  EXPECT_THROW(apply_shift(v, {ShiftKind::gaussian_blur, -1.0, 0}), DomainError);
  EXPECT_THROW(apply_shift(v, {ShiftKind::gaussian_noise, -0.1, 0}), DomainError);
}

TEST(Shift, ListIsAppliedInOrderAndReproducible) {
  const auto v = generate_sequence(spec_with(Motion::pulsating_ellipsoid, 0.3)).frames[3];
  const std::vector<ShiftSpec> list{{ShiftKind::gamma, 0.2, 1}, {ShiftKind::gaussian_noise, 0.02, 2}};
  const auto a = apply_shifts(v, list);
  EXPECT_EQ(a, apply_shift(apply_shift(v, list[0]), list[1]));
  EXPECT_EQ(a, apply_shifts(v, list));
}

TEST(VolumeFile, RoundTripIsBitExactWithTheDocumentedSize) {
  const auto v = generate_sequence(spec_with(Motion::translating_blob, 0.3)).frames[1];
  const auto path = scratch("rt.vol");
  write_volume(path, v);
  EXPECT_EQ(read_volume(path), v);
  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, R"({"dtype":"f32","order":"row-major","shape":[32,32,32]})");
  EXPECT_EQ(fs::file_size(path) - header.size() - 1, 131072u);
}

TEST(VolumeFile, TruncatedPayloadNamesBothByteCounts) {
  const auto path = scratch("trunc.vol");
  write_volume(path, Volume({4, 4, 4}, 0.5f));
  fs::resize_file(path, fs::file_size(path) - 10);
  try {
    read_volume(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("246"), std::string::npos) << msg;
    EXPECT_NE(msg.find("256"), std::string::npos) << msg;
  }
}

TEST(VolumeFile, MalformedHeadersAreFormatErrors) {
  const auto path = scratch("bad.vol");
  {
    std::ofstream(path) << "not json\n";
  }
  EXPECT_THROW(read_volume(path), FormatError);
  {
    std::ofstream(path) << R"({"shape":[2,2],"dtype":"f32","order":"row-major"})" << '\n';
  }
  EXPECT_THROW(read_volume(path), FormatError);
  {
    std::ofstream(path) << R"({"shape":[1,1,1],"dtype":"f64","order":"row-major"})" << '\n';
  }
  EXPECT_THROW(read_volume(path), FormatError);
  EXPECT_THROW(read_volume(scratch("missing.vol")), FormatError);
}

}  // namespace
}  // namespace ttvi
