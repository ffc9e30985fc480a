#include "ttvi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ttvi/rng.hpp"

namespace ttvi::synth {

namespace {

using std::size_t;

struct Ellipsoid {
  std::array<double, 3> centre{};
  std::array<double, 3> radii{};
  double intensity = 0.0;
};

// Smooth indicator with an edge about one voxel wide at 32^3.
double soft_inside(const Ellipsoid& e, const std::array<double, 3>& p, double scale) {
  double rho2 = 0.0;
  for (size_t a = 0; a < 3; ++a) {
    const double q = (p[a] - e.centre[a]) / (e.radii[a] * scale);
    rho2 += q * q;
  }
  constexpr double kEdge = 0.06;
  return 1.0 / (1.0 + std::exp(-(1.0 - std::sqrt(rho2)) / kEdge));
}

struct Phantom {
  Ellipsoid body;
  Ellipsoid marker;
  Ellipsoid moving;
  std::array<double, 3> travel{};  // blob displacement at phase 1
};

Phantom draw_phantom(const SequenceSpec& spec) {
  std::mt19937_64 rng(derive_seed(spec.seed, {0}));
  auto jitter = [&rng](double s) { return std::uniform_real_distribution<double>(-s, s)(rng); };
  Phantom p;
  p.body = {{jitter(0.05), jitter(0.05), jitter(0.05)}, {0.85 + jitter(0.05), 0.7 + jitter(0.05), 0.75 + jitter(0.05)},
            0.25 + jitter(0.05)};
  // Posterior marker breaks the in-plane symmetry so quarter turns are distinguishable.
  p.marker = {{jitter(0.05), 0.5 + jitter(0.05), jitter(0.05)}, {0.15, 0.15, 0.15}, 0.9 + jitter(0.05)};
  p.moving = {{jitter(0.05), -0.2 + jitter(0.05), -0.25 + jitter(0.05)},
              {0.3 + jitter(0.03), 0.25 + jitter(0.03), 0.28 + jitter(0.03)},
              0.7 + jitter(0.05)};
  if (spec.motion == Motion::translating_blob) {
    p.moving.radii = {0.22, 0.22, 0.22};
    const double angle = jitter(std::numbers::pi);
    p.travel = {0.0, spec.amplitude * std::sin(angle), spec.amplitude * std::cos(angle)};
  }
  return p;
}

Volume render(const SequenceSpec& spec, const Phantom& ph, double phase, std::uint64_t noise_seed) {
  const auto& g = spec.grid;
  Volume v({g[0], g[1], g[2]});
  Ellipsoid moving = ph.moving;
  double scale = 1.0;
  if (spec.motion == Motion::pulsating_ellipsoid) {
    scale = 1.0 + spec.amplitude * phase;
  } else {
    for (size_t a = 0; a < 3; ++a) moving.centre[a] += phase * ph.travel[a];
  }
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, spec.noise_floor > 0.0 ? spec.noise_floor : 1.0);
  auto coord = [](size_t i, size_t n) { return -1.0 + 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n); };
  for (size_t z = 0; z < g[0]; ++z) {
    for (size_t y = 0; y < g[1]; ++y) {
      for (size_t x = 0; x < g[2]; ++x) {
        const std::array<double, 3> p{coord(z, g[0]), coord(y, g[1]), coord(x, g[2])};
        double val = ph.body.intensity * soft_inside(ph.body, p, 1.0) +
                     ph.marker.intensity * soft_inside(ph.marker, p, 1.0) +
                     moving.intensity * soft_inside(moving, p, scale);
        if (spec.noise_floor > 0.0) val += noise(rng);
        v[(z * g[1] + y) * g[2] + x] = static_cast<float>(std::clamp(val, 0.0, 1.0));
      }
    }
  }
  return v;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    total += k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  }
  for (auto& w : k) w /= total;
  return k;
}

// Convolves along one axis of a [D, H, W] buffer with edge clamping.
void blur_axis(std::vector<double>& data, const std::array<size_t, 3>& e, size_t axis, const std::vector<double>& k) {
  const int radius = static_cast<int>(k.size() / 2);
  const std::array<size_t, 3> stride{e[1] * e[2], e[2], 1};
  std::vector<double> out(data.size());
  for (size_t z = 0; z < e[0]; ++z) {
    for (size_t y = 0; y < e[1]; ++y) {
      for (size_t x = 0; x < e[2]; ++x) {
        const std::array<size_t, 3> idx{z, y, x};
        const size_t base = z * stride[0] + y * stride[1] + x;
        const size_t pos = idx[axis];
        double s = 0.0;
        for (int o = -radius; o <= radius; ++o) {
          const auto q = std::clamp<long long>(static_cast<long long>(pos) + o, 0, static_cast<long long>(e[axis]) - 1);
          s += k[static_cast<size_t>(o + radius)] * data[base - pos * stride[axis] + static_cast<size_t>(q) * stride[axis]];
        }
        out[base] = s;
      }
    }
  }
  data.swap(out);
}

}  // namespace

std::string motion_name(Motion m) {
  return m == Motion::pulsating_ellipsoid ? "pulsating-ellipsoid" : "translating-blob";
}

Motion parse_motion(const std::string& name) {
  if (name == "pulsating-ellipsoid") return Motion::pulsating_ellipsoid;
  if (name == "translating-blob") return Motion::translating_blob;
  throw ContractError("unknown motion '" + name + "'");
}

void SequenceSpec::validate() const {
  if (n_frames < 3) throw ContractError("sequence: need at least 3 frames, got " + std::to_string(n_frames));
  for (size_t e : grid) {
    if (e < 4) throw ContractError("sequence: grid extent " + std::to_string(e) + " too small");
  }
  if (!(amplitude >= 0.0 && amplitude <= kMaxAmplitude)) {
    throw DomainError("sequence: amplitude " + std::to_string(amplitude) + " outside [0, " +
                      std::to_string(kMaxAmplitude) + "]; shapes would leave the grid");
  }
  if (!(noise_floor >= 0.0 && noise_floor <= 0.2)) {
    throw DomainError("sequence: noise_floor " + std::to_string(noise_floor) + " outside [0, 0.2]");
  }
}

Sequence4D generate_sequence(const SequenceSpec& spec) {
  spec.validate();
  const Phantom ph = draw_phantom(spec);
  Sequence4D seq{spec, {}};
  seq.frames.reserve(spec.n_frames);
  for (size_t i = 0; i < spec.n_frames; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(spec.n_frames - 1);
    const double phase = 0.5 * (1.0 - std::cos(std::numbers::pi * t));
    seq.frames.push_back(render(spec, ph, phase, derive_seed(spec.seed, {1, i})));
  }
  return seq;
}

std::string shift_name(ShiftKind k) {
  switch (k) {
    case ShiftKind::intensity_gain: return "intensity-gain";
    case ShiftKind::gamma: return "gamma";
    case ShiftKind::gaussian_noise: return "gaussian-noise";
    case ShiftKind::gaussian_blur: return "gaussian-blur";
    case ShiftKind::bias_field: return "bias-field";
  }
  return "?";
}

ShiftKind parse_shift(const std::string& name) {
  for (auto k : {ShiftKind::intensity_gain, ShiftKind::gamma, ShiftKind::gaussian_noise, ShiftKind::gaussian_blur,
                 ShiftKind::bias_field}) {
    if (shift_name(k) == name) return k;
  }
  throw ContractError("unknown shift kind '" + name + "'");
}

Volume apply_shift(const Volume& volume, const ShiftSpec& shift) {
  if (volume.rank() != 3) throw ShapeError("apply_shift: expected [D,H,W], got " + to_string(volume.shape()));
  if (shift.magnitude == 0.0) return volume;
  if (shift.magnitude < 0.0 && shift.kind != ShiftKind::intensity_gain && shift.kind != ShiftKind::gamma) {
    throw DomainError("apply_shift: negative magnitude for " + shift_name(shift.kind));
  }
  const std::array<size_t, 3> e{volume.dim(0), volume.dim(1), volume.dim(2)};
  Volume out(volume.shape());
  auto clip = [](double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); };
  switch (shift.kind) {
    case ShiftKind::intensity_gain: {
      const double gain = 1.0 + shift.magnitude;
      for (size_t i = 0; i < out.size(); ++i) out[i] = clip(static_cast<double>(volume[i]) * gain);
      break;
    }
    case ShiftKind::gamma: {
      const double exponent = 1.0 + shift.magnitude;
      if (exponent <= 0.0) throw DomainError("apply_shift: gamma exponent must be positive");
      for (size_t i = 0; i < out.size(); ++i) out[i] = clip(std::pow(static_cast<double>(volume[i]), exponent));
      break;
    }
    case ShiftKind::gaussian_noise: {
      std::mt19937_64 rng(derive_seed(shift.seed, {2}));
      std::normal_distribution<double> noise(0.0, shift.magnitude);
      for (size_t i = 0; i < out.size(); ++i) out[i] = clip(static_cast<double>(volume[i]) + noise(rng));
      break;
    }
    case ShiftKind::gaussian_blur: {
      std::vector<double> buf(volume.data().begin(), volume.data().end());
      const auto k = gaussian_kernel(shift.magnitude);
      for (size_t axis = 0; axis < 3; ++axis) blur_axis(buf, e, axis, k);
      for (size_t i = 0; i < out.size(); ++i) out[i] = clip(buf[i]);
      break;
    }
    case ShiftKind::bias_field: {
      std::mt19937_64 rng(derive_seed(shift.seed, {3}));
      std::normal_distribution<double> n01(0.0, 1.0);
      std::array<double, 3> u{n01(rng), n01(rng), n01(rng)};
      const double norm = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
      for (auto& c : u) c /= norm;
      auto coord = [](size_t i, size_t n) { return -1.0 + 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n); };
      for (size_t z = 0; z < e[0]; ++z) {
        for (size_t y = 0; y < e[1]; ++y) {
          for (size_t x = 0; x < e[2]; ++x) {
            const double proj = u[0] * coord(z, e[0]) + u[1] * coord(y, e[1]) + u[2] * coord(x, e[2]);
            const size_t i = (z * e[1] + y) * e[2] + x;
            out[i] = clip(static_cast<double>(volume[i]) * (1.0 + shift.magnitude * proj));
          }
        }
      }
      break;
    }
  }
  return out;
}

Volume apply_shifts(const Volume& volume, const std::vector<ShiftSpec>& shifts) {
  Volume v = volume;
  for (const auto& s : shifts) v = apply_shift(v, s);
  return v;
}

}  // namespace ttvi::synth
