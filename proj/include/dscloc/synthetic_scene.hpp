#pragma once

// Analytic ray-plane renderer producing color, depth and pose triplets with
// known ground truth, plus camera trajectory generators.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dscloc/geometry.hpp"
#include "dscloc/image.hpp"
#include "dscloc/view_synthesis.hpp"

namespace dscloc {

/// Band-limited texture: 0.5 + Σ_k amplitude_k sin(2π (f_k · (s, t)) + phase_k)
/// per channel, with (s, t) the in-plane coordinates in scene units.
struct SinusoidTexture {
  struct Wave {
    double fs = 0.0;  // cycles per scene unit along the first in-plane axis
    double ft = 0.0;
    double amplitude = 0.0;
    double phase = 0.0;
  };
  std::vector<std::vector<Wave>> channels;

  double sample(int channel, double s, double t) const {
    double value = 0.5;
    for (const Wave& w : channels[channel])
      value += w.amplitude * std::sin(2.0 * kPi * (w.fs * s + w.ft * t) + w.phase);
    return value;
  }
};

struct TexturedPlane {
  Vec3<double> point;
  Vec3<double> normal;  // unit, pointing toward the free space cameras live in
  Vec3<double> axis_s;  // unit, in-plane
  Vec3<double> axis_t;  // unit, in-plane, orthogonal to axis_s
  SinusoidTexture texture;
};

struct PlanarScene {
  std::vector<TexturedPlane> planes;
  int channels = 3;

  void validate() const {
    for (const auto& p : planes) {
      if (std::abs(norm(p.normal) - 1.0) > 1e-9) throw std::invalid_argument("plane normal must be unit length");
      if (static_cast<int>(p.texture.channels.size()) != channels)
        throw std::invalid_argument("plane texture channel count mismatch");
    }
  }
};

namespace detail {

// Portable uniform draw in [lo, hi).
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

inline SinusoidTexture random_texture(std::mt19937_64& rng, int channels) {
  SinusoidTexture tex;
  tex.channels.resize(channels);
  // A luminance pattern shared by all channels plus a weaker per-channel tint.
  std::vector<SinusoidTexture::Wave> shared;
  for (int k = 0; k < 3; ++k) {
    const double freq = uniform(rng, 0.35, 1.1);
    const double dir = uniform(rng, 0.0, kPi);
    shared.push_back({freq * std::cos(dir), freq * std::sin(dir), uniform(rng, 0.07, 0.11), uniform(rng, 0.0, 2 * kPi)});
  }
  for (int c = 0; c < channels; ++c) {
    tex.channels[c] = shared;
    const double freq = uniform(rng, 0.3, 0.9);
    const double dir = uniform(rng, 0.0, kPi);
    tex.channels[c].push_back(
        {freq * std::cos(dir), freq * std::sin(dir), uniform(rng, 0.03, 0.06), uniform(rng, 0.0, 2 * kPi)});
  }
  return tex;
}

}  // namespace detail

/// Back wall, floor and side walls of a room seen by cameras near the origin
/// looking down +z (camera y points down).
inline PlanarScene default_room(std::uint64_t seed, int channels = 3) {
  std::mt19937_64 rng(seed);
  PlanarScene scene;
  scene.channels = channels;
  scene.planes.push_back({{0, 0, 4.0}, {0, 0, -1}, {1, 0, 0}, {0, 1, 0}, detail::random_texture(rng, channels)});
  scene.planes.push_back({{0, 1.0, 0}, {0, -1, 0}, {1, 0, 0}, {0, 0, 1}, detail::random_texture(rng, channels)});
  scene.planes.push_back({{-1.6, 0, 0}, {1, 0, 0}, {0, 0, 1}, {0, 1, 0}, detail::random_texture(rng, channels)});
  scene.planes.push_back({{1.6, 0, 0}, {-1, 0, 0}, {0, 0, 1}, {0, 1, 0}, detail::random_texture(rng, channels)});
  return scene;
}

struct RenderedFrame {
  ImageBuffer color;
  DepthMap<double> depth;  // camera-frame z
};

/// Nearest positive ray-plane hit per pixel. Depth is the camera-frame z of
/// the hit because the camera ray K^-1 [u, v, 1] has unit z.
inline RenderedFrame render_frame(const PlanarScene& scene, const Pose<double>& pose, const Intrinsics& K, int width,
                                  int height) {
  scene.validate();
  K.validate();
  const Mat3<double> R = axis_angle_to_matrix(pose.attitude);
  const Vec3<double>& c = pose.position;
  for (const auto& plane : scene.planes)
    if (dot(plane.normal, c - plane.point) <= 0.0)
      throw std::invalid_argument("render_frame: camera is not in front of every plane");
  RenderedFrame out{ImageBuffer(width, height, scene.channels), DepthMap<double>(width, height, 1)};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Vec3<double> dir = R * K.ray(x, y);
      double best = std::numeric_limits<double>::infinity();
      const TexturedPlane* hit = nullptr;
      for (const auto& plane : scene.planes) {
        const double denom = dot(plane.normal, dir);
        if (std::abs(denom) < 1e-12) continue;
        const double t = dot(plane.normal, plane.point - c) / denom;
        if (t > 1e-9 && t < best) {
          best = t;
          hit = &plane;
        }
      }
      if (hit == nullptr)
        throw std::runtime_error("render_frame: pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                                 ") misses every plane");
      const Vec3<double> X = c + best * dir;
      const Vec3<double> local = X - hit->point;
      const double s = dot(local, hit->axis_s), t = dot(local, hit->axis_t);
      for (int ch = 0; ch < scene.channels; ++ch) out.color.at(x, y, ch) = hit->texture.sample(ch, s, t);
      out.depth.at(x, y) = best;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

enum class TrajectoryPattern { kArc, kLateral, kOrbit };

inline TrajectoryPattern parse_pattern(const std::string& name) {
  if (name == "arc") return TrajectoryPattern::kArc;
  if (name == "lateral") return TrajectoryPattern::kLateral;
  if (name == "orbit") return TrajectoryPattern::kOrbit;
  throw std::invalid_argument("unknown trajectory pattern '" + name + "'");
}

struct TrajectoryOptions {
  TrajectoryPattern pattern = TrajectoryPattern::kArc;
  int n_frames = 9;
  double scale = 0.1;  // camera travel between consecutive frames, scene units
  double radius = 1.5;
  /// Orbit: look-at point. Arc: position of the middle frame.
  Vec3<double> target{0.0, 0.2, 0.0};
};

struct TrajectoryFrame {
  int id = 0;
  Pose<double> pose;
};
using Trajectory = std::vector<TrajectoryFrame>;

/// Camera-to-world attitude looking from `eye` at `target`, camera y pointing
/// along world +y (down).
inline Mat3<double> look_at(const Vec3<double>& eye, const Vec3<double>& target) {
  const Vec3<double> f = target - eye;
  const Vec3<double> z = (1.0 / norm(f)) * f;
  const Vec3<double> xr = cross(Vec3<double>{0, 1, 0}, z);
  const Vec3<double> x = (1.0 / norm(xr)) * xr;
  const Vec3<double> y = cross(z, x);
  Mat3<double> R;
  for (int r = 0; r < 3; ++r) {
    R(r, 0) = x[r];
    R(r, 1) = y[r];
    R(r, 2) = z[r];
  }
  return R;
}

inline Trajectory generate_trajectory(const TrajectoryOptions& opt) {
  if (opt.n_frames < 3) throw std::invalid_argument("generate_trajectory: need at least 3 frames");
  Trajectory traj;
  const double mid = 0.5 * (opt.n_frames - 1);
  const double step = opt.scale / opt.radius;  // radians per frame on arcs
  for (int i = 0; i < opt.n_frames; ++i) {
    Pose<double> pose;
    switch (opt.pattern) {
      case TrajectoryPattern::kLateral:
        pose.position = {opt.scale * i, 0.0, 0.0};
        break;
      case TrajectoryPattern::kArc: {
        // Facing away from the arc center.
        const double phi = (i - mid) * step;
        const Vec3<double> center = opt.target - Vec3<double>{0.0, 0.0, opt.radius};
        pose.position = center + opt.radius * Vec3<double>{std::sin(phi), 0.0, std::cos(phi)};
        pose.attitude = {0.0, phi, 0.0};
        break;
      }
      case TrajectoryPattern::kOrbit: {
        const double phi = (i - mid) * step;
        // Orbit: cameras on a circle of `radius` before `target`, looking at it.
        const double bob = 0.5 * opt.scale * std::sin(2.0 * kPi * i / opt.n_frames);
        const Vec3<double> eye = opt.target - opt.radius * Vec3<double>{std::sin(phi), 0.0, std::cos(phi)};
        pose.position = eye + Vec3<double>{0.0, bob, 0.0};
        pose.attitude = matrix_to_axis_angle(look_at(pose.position, opt.target));
        break;
      }
    }
    traj.push_back({i, pose});
  }
  return traj;
}

/// Fraction of target pixels that land inside the source view under the
/// ground-truth depth and relative pose.
inline double covisible_fraction(const DepthMap<double>& target_depth, const Pose<double>& target,
                                 const Pose<double>& source, const Intrinsics& K) {
  const auto [map, mask] =
      pixel_map(target_depth, relative_transform(target, source), K, K, target_depth.width, target_depth.height);
  return static_cast<double>(mask.count()) / static_cast<double>(target_depth.pixel_count());
}

}  // namespace dscloc
