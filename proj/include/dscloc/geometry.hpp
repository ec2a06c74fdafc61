#pragma once

// Pose algebra and per-pixel camera pose recovery from directed scene
// coordinates and depth.
//
// Conventions:
//   * Pixel centers sit at integer coordinates; p = (u, v) = (column, row).
//   * T(P) is the camera-to-world rigid transform of pose P: a camera-frame
//     point x maps to R(attitude) x + position.
//   * Depth is camera-frame z, so back-projection is depth * K^-1 [u, v, 1]^T.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include "dscloc/scalar.hpp"

namespace dscloc {

template <class A, class B>
using Product = decltype(std::declval<A>() * std::declval<B>());

template <class T>
struct Vec3 {
  std::array<T, 3> v{T(0.0), T(0.0), T(0.0)};

  Vec3() = default;
  Vec3(T x, T y, T z) : v{std::move(x), std::move(y), std::move(z)} {}
  template <class U>
    requires(!std::same_as<U, T> && std::convertible_to<U, T>)
  explicit Vec3(const Vec3<U>& o) : v{T(o[0]), T(o[1]), T(o[2])} {}

  T& operator[](std::size_t i) { return v[i]; }
  const T& operator[](std::size_t i) const { return v[i]; }
  const T& x() const { return v[0]; }
  const T& y() const { return v[1]; }
  const T& z() const { return v[2]; }

  static Vec3 unit_z() { return {T(0.0), T(0.0), T(1.0)}; }
};

template <class A, class B>
Vec3<Product<A, B>> operator+(const Vec3<A>& a, const Vec3<B>& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
template <class A, class B>
Vec3<Product<A, B>> operator-(const Vec3<A>& a, const Vec3<B>& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
template <class A>
Vec3<A> operator-(const Vec3<A>& a) {
  return {-a[0], -a[1], -a[2]};
}
template <class S, class A>
  requires(!std::is_class_v<S> || std::same_as<S, ad::Var>)
Vec3<Product<S, A>> operator*(const S& s, const Vec3<A>& a) {
  return {s * a[0], s * a[1], s * a[2]};
}
template <class A, class B>
Product<A, B> dot(const Vec3<A>& a, const Vec3<B>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
template <class A, class B>
Vec3<Product<A, B>> cross(const Vec3<A>& a, const Vec3<B>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
template <class T>
T norm(const Vec3<T>& a) {
  return norm(std::span<const T>(a.v));
}

/// Row-major 3x3 matrix.
template <class T>
struct Mat3 {
  std::array<T, 9> m{};

  T& operator()(int r, int c) { return m[3 * r + c]; }
  const T& operator()(int r, int c) const { return m[3 * r + c]; }

  static Mat3 identity() {
    Mat3 I;
    for (auto& x : I.m) x = T(0.0);
    I(0, 0) = I(1, 1) = I(2, 2) = T(1.0);
    return I;
  }

  Mat3 transpose() const {
    Mat3 t;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t(r, c) = (*this)(c, r);
    return t;
  }

  T trace() const { return m[0] + m[4] + m[8]; }
};

template <class A, class B>
Mat3<Product<A, B>> operator*(const Mat3<A>& a, const Mat3<B>& b) {
  Mat3<Product<A, B>> out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = a(r, 0) * b(0, c) + a(r, 1) * b(1, c) + a(r, 2) * b(2, c);
  return out;
}
template <class A, class B>
Vec3<Product<A, B>> operator*(const Mat3<A>& a, const Vec3<B>& x) {
  return {a(0, 0) * x[0] + a(0, 1) * x[1] + a(0, 2) * x[2], a(1, 0) * x[0] + a(1, 1) * x[1] + a(1, 2) * x[2],
          a(2, 0) * x[0] + a(2, 1) * x[1] + a(2, 2) * x[2]};
}

template <class T>
Mat3<T> skew(const Vec3<T>& w) {
  Mat3<T> K;
  K(0, 0) = T(0.0), K(0, 1) = -w[2], K(0, 2) = w[1];
  K(1, 0) = w[2], K(1, 1) = T(0.0), K(1, 2) = -w[0];
  K(2, 0) = -w[1], K(2, 1) = w[0], K(2, 2) = T(0.0);
  return K;
}

template <class T>
Mat3<double> value_of(const Mat3<T>& a) {
  Mat3<double> out;
  for (int i = 0; i < 9; ++i) out.m[i] = value_of(a.m[i]);
  return out;
}
template <class T>
Vec3<double> value_of(const Vec3<T>& a) {
  return {value_of(a[0]), value_of(a[1]), value_of(a[2])};
}

// ---------------------------------------------------------------------------
// Camera intrinsics
// ---------------------------------------------------------------------------

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const {
    if (!(std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) && std::isfinite(cy)))
      throw std::invalid_argument("intrinsics must be finite");
    if (!(fx > 0.0 && fy > 0.0)) throw std::invalid_argument("focal lengths must be positive");
  }

  /// K^-1 [u, v, 1]^T.
  Vec3<double> ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }

  bool operator==(const Intrinsics&) const = default;
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

// ---------------------------------------------------------------------------
// Rotations
// ---------------------------------------------------------------------------

/// Rodrigues formula; smooth through the zero rotation.
template <class T>
Mat3<T> axis_angle_to_matrix(const Vec3<T>& aa) {
  const T theta2 = dot(aa, aa);
  T a, b;  // sin(θ)/θ and (1 - cos(θ))/θ²
  if (value_of(theta2) < 1e-8) {
    a = T(1.0) - theta2 * (1.0 / 6.0) + theta2 * theta2 * (1.0 / 120.0);
    b = T(0.5) - theta2 * (1.0 / 24.0) + theta2 * theta2 * (1.0 / 720.0);
  } else {
    const T theta = sqrt(theta2);
    a = sin(theta) / theta;
    b = (T(1.0) - cos(theta)) / theta2;
  }
  const Mat3<T> K = skew(aa);
  const Mat3<T> K2 = K * K;
  Mat3<T> R = Mat3<T>::identity();
  for (int i = 0; i < 9; ++i) R.m[i] = R.m[i] + a * K.m[i] + b * K2.m[i];
  return R;
}

namespace detail {

// At angle exactly π the axis sign is free; pick the first nonzero component positive.
inline bool needs_flip(const Vec3<double>& axis) {
  for (int i = 0; i < 3; ++i) {
    if (axis[i] > 0.0) return false;
    if (axis[i] < 0.0) return true;
  }
  return false;
}

}  // namespace detail

/// Logarithm of a rotation matrix, returned in canonical form (angle in [0, π]).
template <class T>
Vec3<T> matrix_to_axis_angle(const Mat3<T>& R) {
  const Vec3<T> w{(R(2, 1) - R(1, 2)) * 0.5, (R(0, 2) - R(2, 0)) * 0.5, (R(1, 0) - R(0, 1)) * 0.5};
  const T c = (R.trace() - 1.0) * 0.5;
  if (value_of(c) > -0.9) {
    // θ/sin θ from the chord length; the series keeps the map smooth at identity.
    const T s2 = dot(w, w);
    if (value_of(s2) < 1e-12) return (T(1.0) + s2 * (1.0 / 6.0)) * w;
    const T s = sqrt(s2);
    return (atan2(s, c) / s) * w;
  }
  // Near π the skew part vanishes; recover the axis from the symmetric part,
  // (R + R^T)/2 - cI = (1 - c) a a^T.
  int k = 0;
  std::array<T, 3> diag;
  for (int i = 0; i < 3; ++i) diag[i] = R(i, i) - c;
  for (int i = 1; i < 3; ++i)
    if (value_of(diag[i]) > value_of(diag[k])) k = i;
  const T one_minus_c = T(1.0) - c;
  const T ak = sqrt(diag[k] / one_minus_c);
  Vec3<T> axis;
  for (int i = 0; i < 3; ++i) {
    if (i == k) {
      axis[i] = ak;
    } else {
      axis[i] = (R(i, k) + R(k, i)) * 0.5 / (one_minus_c * ak);
    }
  }
  // At a half turn the skew part is rounding noise; pick the sign by convention.
  bool flip = value_of(dot(axis, w)) < 0.0;
  if (value_of(norm(w)) < 1e-12) flip = detail::needs_flip(value_of(axis));
  if (flip) axis = -axis;
  const T theta = atan2(norm(w), c);
  return theta * axis;
}

/// Maps an axis-angle vector to the equivalent one with angle in [0, π].
template <class T>
Vec3<T> canonicalize(const Vec3<T>& aa) {
  const double theta = norm(value_of(aa));
  if (theta < kPi) return aa;
  Vec3<T> out = aa;
  double target = kPi;
  if (theta != kPi) {
    target = std::remainder(theta, 2.0 * kPi);  // in [-π, π]
    out = (target / theta) * aa;
  }
  if (std::abs(target) == kPi && detail::needs_flip(value_of(out))) out = -out;
  return out;
}

// ---------------------------------------------------------------------------
// Poses
// ---------------------------------------------------------------------------

template <class T>
struct Pose {
  Vec3<T> attitude;  // axis-angle, canonical
  Vec3<T> position;  // scene units

  /// [attitude; position].
  std::array<T, 6> vector6() const {
    return {attitude[0], attitude[1], attitude[2], position[0], position[1], position[2]};
  }
  static Pose from_vector6(std::span<const T, 6> x) { return {{x[0], x[1], x[2]}, {x[3], x[4], x[5]}}; }
};

template <class T>
Pose<double> value_of(const Pose<T>& p) {
  return {value_of(p.attitude), value_of(p.position)};
}

template <class T>
struct RelativeTransform {
  Mat3<T> rotation = Mat3<T>::identity();
  Vec3<T> translation;

  template <class U>
  Vec3<Product<T, U>> apply(const Vec3<U>& x) const {
    return rotation * x + translation;
  }
};

/// Q = depth * K^-1 [u, v, 1]^T.
template <class T>
Vec3<T> back_project(Pixel p, const T& depth, const Intrinsics& K) {
  if (!(value_of(depth) > 0.0)) throw std::invalid_argument("back_project: depth must be positive");
  const Vec3<double> r = K.ray(p.u, p.v);
  return depth * r;
}

/// Minimal rotation taking e_z onto the normalized ray through (u, v) (zero roll).
template <class T>
Mat3<T> ray_rotation(const T& u, const T& v, const Intrinsics& K) {
  const Vec3<T> r{(u - K.cx) / K.fx, (v - K.cy) / K.fy, T(1.0)};
  const T inv = 1.0 / norm(r);
  const Vec3<T> d = inv * r;
  const Vec3<T> axis = cross(Vec3<T>::unit_z(), d);
  // R = I + [v]x + [v]x^2 / (1 + c); c > 0 because every pixel ray points forward.
  const T s = 1.0 / (1.0 + d.z());
  const Mat3<T> K1 = skew(axis);
  const Mat3<T> K2 = K1 * K1;
  Mat3<T> R = Mat3<T>::identity();
  for (int i = 0; i < 9; ++i) R.m[i] = R.m[i] + K1.m[i] + s * K2.m[i];
  return R;
}

inline Mat3<double> ray_rotation(Pixel p, const Intrinsics& K) { return ray_rotation(p.u, p.v, K); }

/// Camera pose implied by one directed scene coordinate [gaze; scene position]
/// and the back-projected point of the same pixel:
///   R(attitude) = R_p^-1 R(gaze),  position = |Q| R(gaze) e_z + scene position.
template <class T, class U>
Pose<Product<T, U>> pose_from_pixel(std::span<const T, 6> dsc, const Vec3<U>& q, Pixel p, const Intrinsics& K) {
  using R_t = Product<T, U>;
  const Vec3<T> gaze{dsc[0], dsc[1], dsc[2]};
  const Vec3<T> scene{dsc[3], dsc[4], dsc[5]};
  const Mat3<T> R_gaze = axis_angle_to_matrix(gaze);
  const Mat3<double> R_p = ray_rotation(p, K);
  const Mat3<T> R_cam = R_p.transpose() * R_gaze;
  const U distance = norm(q);
  const Vec3<T> gaze_dir{R_gaze(0, 2), R_gaze(1, 2), R_gaze(2, 2)};  // R(gaze) e_z
  Pose<R_t> out;
  out.attitude = Vec3<R_t>(matrix_to_axis_angle(R_cam));
  out.position = distance * gaze_dir + scene;
  return out;
}

/// Inverse of pose_from_pixel: the directed scene coordinate that reproduces
/// `pose` at pixel p for a point at distance |q|.
inline std::array<double, 6> dsc_from_pose(const Pose<double>& pose, double distance, Pixel p, const Intrinsics& K) {
  const Mat3<double> R_gaze = ray_rotation(p, K) * axis_angle_to_matrix(pose.attitude);
  const Vec3<double> gaze = matrix_to_axis_angle(R_gaze);
  const Vec3<double> gaze_dir{R_gaze(0, 2), R_gaze(1, 2), R_gaze(2, 2)};
  const Vec3<double> scene = pose.position - distance * gaze_dir;
  return {gaze[0], gaze[1], gaze[2], scene[0], scene[1], scene[2]};
}

enum class AggregateMode { kMean, kMedian };

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) throw std::invalid_argument("median of empty set");
  const std::size_t n = xs.size();
  const std::size_t mid = n / 2;
  std::nth_element(xs.begin(), xs.begin() + mid, xs.end());
  const double hi = xs[mid];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(xs.begin(), xs.begin() + mid);
  return 0.5 * (lo + hi);
}

/// Component-wise mean (differentiable) of the 6-vectors [attitude; position].
template <class T>
Pose<T> mean_pose(std::span<const Pose<T>> poses) {
  if (poses.empty()) throw std::invalid_argument("aggregate_pose: empty pose list");
  const double w = 1.0 / static_cast<double>(poses.size());
  std::array<T, 6> acc;
  std::vector<T> column(poses.size());
  std::vector<double> weights(poses.size(), w);
  for (int k = 0; k < 6; ++k) {
    for (std::size_t i = 0; i < poses.size(); ++i)
      column[i] = k < 3 ? poses[i].attitude[k] : poses[i].position[k - 3];
    acc[k] = lin_comb(std::span<const T>(column), std::span<const double>(weights));
  }
  Pose<T> out = Pose<T>::from_vector6(std::span<const T, 6>(acc));
  out.attitude = canonicalize(out.attitude);
  return out;
}

inline Pose<double> aggregate_pose(std::span<const Pose<double>> poses, AggregateMode mode) {
  if (mode == AggregateMode::kMean) return mean_pose(poses);
  if (poses.empty()) throw std::invalid_argument("aggregate_pose: empty pose list");
  std::array<double, 6> acc{};
  std::vector<double> column(poses.size());
  for (int k = 0; k < 6; ++k) {
    for (std::size_t i = 0; i < poses.size(); ++i)
      column[i] = k < 3 ? poses[i].attitude[k] : poses[i].position[k - 3];
    acc[k] = median_of(column);
  }
  Pose<double> out = Pose<double>::from_vector6(std::span<const double, 6>(acc));
  out.attitude = canonicalize(out.attitude);
  return out;
}

/// T_{t→s} = T(P_s)^-1 T(P_t): maps target-camera points into the source camera.
template <class T>
RelativeTransform<T> relative_transform(const Pose<T>& target, const Pose<T>& source) {
  const Mat3<T> R_t = axis_angle_to_matrix(target.attitude);
  const Mat3<T> R_sT = axis_angle_to_matrix(source.attitude).transpose();
  return {R_sT * R_t, R_sT * (target.position - source.position)};
}

/// 4x4 homogeneous camera-to-world matrix, row-major.
using Matrix4 = std::array<double, 16>;

inline Matrix4 to_matrix4(const Pose<double>& p) {
  const Mat3<double> R = axis_angle_to_matrix(p.attitude);
  Matrix4 M{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) M[4 * r + c] = R(r, c);
    M[4 * r + 3] = p.position[r];
  }
  M[15] = 1.0;
  return M;
}

inline Pose<double> pose_from_rt(const Mat3<double>& R, const Vec3<double>& t) {
  return {matrix_to_axis_angle(R), t};
}

}  // namespace dscloc
