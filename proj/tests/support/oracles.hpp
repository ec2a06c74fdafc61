#pragma once

// Independent reference computations for the test suites, written directly in
// Eigen or as plain nested loops. Nothing here calls the library's own
// geometry or metric code.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dscloc/geometry.hpp"
#include "dscloc/image.hpp"

namespace oracle {

using dscloc::Intrinsics;
using dscloc::Mat3;
using dscloc::Pixel;
using dscloc::Pose;
using dscloc::Vec3;

inline Eigen::Vector3d eig(const Vec3<double>& v) { return {v[0], v[1], v[2]}; }

inline Eigen::Matrix3d eig(const Mat3<double>& m) {
  Eigen::Matrix3d out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = m(r, c);
  return out;
}

inline Vec3<double> vec(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }

inline Eigen::Matrix3d K_matrix(const Intrinsics& K) {
  Eigen::Matrix3d M;
  M << K.fx, 0.0, K.cx, 0.0, K.fy, K.cy, 0.0, 0.0, 1.0;
  return M;
}

inline Eigen::Matrix3d rodrigues(const Vec3<double>& aa) {
  const Eigen::Vector3d w = eig(aa);
  const double angle = w.norm();
  if (angle == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

inline Eigen::Vector3d lift(Pixel p, double depth, const Intrinsics& K) {
  return depth * K_matrix(K).inverse() * Eigen::Vector3d(p.u, p.v, 1.0);
}

/// Shortest-arc rotation from e_z onto the pixel ray.
inline Eigen::Matrix3d shortest_arc(Pixel p, const Intrinsics& K) {
  const Eigen::Vector3d ray = K_matrix(K).inverse() * Eigen::Vector3d(p.u, p.v, 1.0);
  return Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitZ(), ray).toRotationMatrix();
}

struct PoseRt {
  Eigen::Matrix3d R;
  Eigen::Vector3d t;
};

/// Camera pose from one directed scene coordinate [gaze; scene] and the
/// back-projected point q of pixel p.
inline PoseRt cell_pose(const std::array<double, 6>& dsc, const Eigen::Vector3d& q, Pixel p,
                              const Intrinsics& K) {
  const Eigen::Matrix3d Rg = rodrigues({dsc[0], dsc[1], dsc[2]});
  return {shortest_arc(p, K).transpose() * Rg, q.norm() * Rg.col(2) + Eigen::Vector3d(dsc[3], dsc[4], dsc[5])};
}

inline Eigen::Matrix4d homogeneous(const Pose<double>& p) {
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topLeftCorner<3, 3>() = rodrigues(p.attitude);
  T.topRightCorner<3, 1>() = eig(p.position);
  return T;
}

/// T(P_s)^-1 T(P_t) by general 4x4 inversion.
inline Eigen::Matrix4d relative4(const Pose<double>& target, const Pose<double>& source) {
  return homogeneous(source).inverse() * homogeneous(target);
}

inline double geodesic_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return Eigen::AngleAxisd(a.transpose() * b).angle() * 180.0 / M_PI;
}

/// Column-wise mean and median over 6-vectors by explicit sorting.
inline std::array<double, 6> column_mean(const std::vector<std::array<double, 6>>& xs) {
  std::array<double, 6> out{};
  for (const auto& x : xs)
    for (int k = 0; k < 6; ++k) out[k] += x[k];
  for (double& v : out) v /= static_cast<double>(xs.size());
  return out;
}

inline std::array<double, 6> column_median(const std::vector<std::array<double, 6>>& xs) {
  std::array<double, 6> out{};
  for (int k = 0; k < 6; ++k) {
    std::vector<double> col;
    for (const auto& x : xs) col.push_back(x[k]);
    std::sort(col.begin(), col.end());
    const std::size_t n = col.size();
    out[k] = n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
  }
  return out;
}

inline double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

struct DepthRow {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0, d1 = 0, d2 = 0, d3 = 0, std_over_med = 0;
};

/// Per-pixel loop with per-frame median scaling, averaged over frames.
inline DepthRow depth_row(const std::vector<dscloc::DepthMap<double>>& pred,
                              const std::vector<dscloc::DepthMap<double>>& gt, double lo, double hi) {
  DepthRow row;
  std::vector<double> scales;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    std::vector<double> g, p;
    for (int y = 0; y < gt[f].height; ++y)
      for (int x = 0; x < gt[f].width; ++x)
        if (gt[f].at(x, y) >= lo && gt[f].at(x, y) <= hi) {
          g.push_back(gt[f].at(x, y));
          p.push_back(pred[f].at(x, y));
        }
    if (g.empty()) continue;
    const double s = median(g) / median(p);
    scales.push_back(s);
    double a = 0, b = 0, c = 0, d = 0, e1 = 0, e2 = 0, e3 = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double ph = s * p[i];
      a += std::fabs(ph - g[i]) / g[i];
      b += (ph - g[i]) * (ph - g[i]) / g[i];
      c += (ph - g[i]) * (ph - g[i]);
      d += std::pow(std::log(ph) - std::log(g[i]), 2);
      const double r = std::max(ph / g[i], g[i] / ph);
      e1 += r < 1.25 ? 1 : 0;
      e2 += r < 1.5625 ? 1 : 0;
      e3 += r < 1.953125 ? 1 : 0;
    }
    const double n = static_cast<double>(g.size());
    row.abs_rel += a / n;
    row.sq_rel += b / n;
    row.rmse += std::sqrt(c / n);
    row.rmse_log += std::sqrt(d / n);
    row.d1 += e1 / n;
    row.d2 += e2 / n;
    row.d3 += e3 / n;
  }
  const double m = static_cast<double>(scales.size());
  row.abs_rel /= m, row.sq_rel /= m, row.rmse /= m, row.rmse_log /= m, row.d1 /= m, row.d2 /= m, row.d3 /= m;
  double mean = 0;
  for (double s : scales) mean += s / m;
  double var = 0;
  for (double s : scales) var += (s - mean) * (s - mean) / m;
  row.std_over_med = std::sqrt(var) / median(scales);
  return row;
}

/// SSIM of one pixel and channel from an explicit 3x3 neighborhood with
/// mirrored borders (index -1 maps to 1, n maps to n - 2).
inline double ssim_at(const dscloc::ImageBuffer& a, const dscloc::ImageBuffer& b, int x, int y, int c) {
  auto mirror = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * n - 2 - i : i); };
  double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const int xx = mirror(x + dx, a.width), yy = mirror(y + dy, a.height);
      const double va = a.at(xx, yy, c), vb = b.at(xx, yy, c);
      ma += va / 9, mb += vb / 9, saa += va * va / 9, sbb += vb * vb / 9, sab += va * vb / 9;
    }
  const double C1 = 1e-4, C2 = 9e-4;
  const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
  return (2 * ma * mb + C1) * (2 * cov + C2) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
}

class Random {
 public:
  explicit Random(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  Vec3<double> vec3(double lo, double hi) { return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)}; }
  /// Axis-angle with angle below max_angle, uniform direction.
  Vec3<double> axis_angle(double max_angle) {
    Eigen::Vector3d axis;
    do axis = Eigen::Vector3d(normal(), normal(), normal());
    while (axis.norm() < 1e-6);
    return vec(uniform(0.0, max_angle) * axis.normalized());
  }
  Pose<double> pose(double max_angle = 3.0, double extent = 3.0) {
    return {axis_angle(max_angle), vec3(-extent, extent)};
  }
  Intrinsics intrinsics() {
    return {uniform(40.0, 600.0), uniform(40.0, 600.0), uniform(20.0, 320.0), uniform(15.0, 240.0)};
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace oracle
