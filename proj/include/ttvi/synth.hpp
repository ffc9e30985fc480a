#pragma once

// Synthetic 4D sequences (deforming phantoms), distribution-shift operators
// and the on-disk volume/sequence formats.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ttvi/tensor.hpp"

namespace ttvi::synth {

using Volume = Tensor<float>;  // [D, H, W], intensities in [0, 1]

enum class Motion { pulsating_ellipsoid, translating_blob };

std::string motion_name(Motion m);
Motion parse_motion(const std::string& name);

inline constexpr double kMaxAmplitude = 0.5;

struct SequenceSpec {
  std::array<std::size_t, 3> grid{32, 32, 32};
  std::size_t n_frames = 10;
  Motion motion = Motion::pulsating_ellipsoid;
  double amplitude = 0.3;     // relative radius growth, or blob travel in half-extents
  double noise_floor = 0.01;  // std of iid acquisition noise per frame
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SequenceSpec&, const SequenceSpec&) = default;
};

/// Frames I_0 .. I_{n-1} at times i / (n - 1).
struct Sequence4D {
  SequenceSpec spec;
  std::vector<Volume> frames;

  double time_of(std::size_t i) const { return static_cast<double>(i) / static_cast<double>(frames.size() - 1); }
};

/// Phantom: static body outline and a bright posterior marker, plus a moving
/// structure following phase s(T) = (1 - cos(pi T)) / 2 from frame 0 to n-1.
Sequence4D generate_sequence(const SequenceSpec& spec);

enum class ShiftKind { intensity_gain, gamma, gaussian_noise, gaussian_blur, bias_field };

std::string shift_name(ShiftKind k);
ShiftKind parse_shift(const std::string& name);

struct ShiftSpec {
  ShiftKind kind = ShiftKind::intensity_gain;
  double magnitude = 0.0;
  std::uint64_t seed = 0;
  friend bool operator==(const ShiftSpec&, const ShiftSpec&) = default;
};

/// Output is clipped to [0, 1]; magnitude 0 returns the input unchanged.
///   intensity_gain  v * (1 + m)
///   gamma           v ^ (1 + m)
///   gaussian_noise  v + N(0, m^2)
///   gaussian_blur   separable Gaussian, sigma = m voxels, edge clamped
///   bias_field      v * (1 + m * <u, p>), u a seeded unit vector, p in [-1, 1]^3
Volume apply_shift(const Volume& volume, const ShiftSpec& shift);
Volume apply_shifts(const Volume& volume, const std::vector<ShiftSpec>& shifts);

// ---- volume file -----------------------------------------------------------
// One UTF-8 JSON header line {"shape":[D,H,W],"dtype":"f32","order":"row-major"}
// followed by the raw little-endian IEEE-754 float payload.

void write_volume(const std::filesystem::path& path, const Volume& volume);
Volume read_volume(const std::filesystem::path& path);

}  // namespace ttvi::synth
