#pragma once

// Linearized photometric system of a frame set around a reference solution.
// Unknowns per frame: a right-multiplied attitude increment (3), a position
// increment (3) and a log depth scale (1). Rows are the per-pixel, per-channel
// residuals I_t - Î_t of every scheduled pair. The null space of the Jacobian
// counts the directions the pair schedule leaves unconstrained.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "dscloc/geometry.hpp"
#include "dscloc/image.hpp"
#include "dscloc/losses.hpp"
#include "dscloc/view_synthesis.hpp"

namespace dscloc {

struct ObservedFrame {
  ImageBuffer image;
  DepthMap<double> depth;
  Pose<double> pose;
};

inline constexpr int kUnknownsPerFrame = 7;

struct LinearizedSystem {
  Eigen::MatrixXd jacobian;
  Eigen::VectorXd singular_values;  // descending
  std::size_t residual_count = 0;

  /// Singular values below rel_tol * σ_max.
  int null_space_dimension(double rel_tol) const {
    if (singular_values.size() == 0) return 0;
    const double cut = rel_tol * singular_values(0);
    int n = 0;
    for (Eigen::Index i = 0; i < singular_values.size(); ++i) n += singular_values(i) <= cut;
    return n;
  }
};

namespace detail {

inline std::vector<ObservedFrame> perturbed(std::span<const ObservedFrame> frames, std::size_t unknown, double h) {
  std::vector<ObservedFrame> out(frames.begin(), frames.end());
  const std::size_t f = unknown / kUnknownsPerFrame;
  const int k = static_cast<int>(unknown % kUnknownsPerFrame);
  ObservedFrame& fr = out[f];
  if (k < 3) {
    Vec3<double> w{0.0, 0.0, 0.0};
    w[k] = h;
    fr.pose.attitude = matrix_to_axis_angle(axis_angle_to_matrix(fr.pose.attitude) * axis_angle_to_matrix(w));
  } else if (k < 6) {
    fr.pose.position[k - 3] += h;
  } else {
    const double s = std::exp(h);
    for (double& d : fr.depth.data) d *= s;
  }
  return out;
}

struct PairResiduals {
  std::vector<Image<double>> synthesized;
  std::vector<ValidMask> masks;
};

inline PairResiduals synthesize_pairs(std::span<const ObservedFrame> frames, std::span<const FramePair> pairs,
                                      const Intrinsics& K) {
  PairResiduals out;
  for (const FramePair& p : pairs) {
    const auto rel = relative_transform(frames[p.target].pose, frames[p.source].pose);
    auto s = synthesize(frames[p.source].image, frames[p.target].depth, rel, K, K);
    out.synthesized.push_back(std::move(s.image));
    out.masks.push_back(std::move(s.mask));
  }
  return out;
}

}  // namespace detail

/// Central-difference Jacobian of the pair residuals at `frames`. A residual
/// contributes a row when its pixel is valid at the reference and every probe,
/// and its differences at h and h/2 agree in every column (no bilinear cell
/// edge inside the probe interval).
inline LinearizedSystem linearize_pairs(std::span<const ObservedFrame> frames, std::span<const FramePair> pairs,
                                        const Intrinsics& K, double h = 1e-6) {
  if (frames.empty() || pairs.empty()) throw std::invalid_argument("linearize_pairs: empty input");
  for (const FramePair& p : pairs)
    if (p.target < 0 || p.source < 0 || std::size_t(p.target) >= frames.size() ||
        std::size_t(p.source) >= frames.size() || p.target == p.source)
      throw std::invalid_argument("linearize_pairs: bad frame pair");
  const std::size_t n_unknowns = frames.size() * kUnknownsPerFrame;
  const auto reference = detail::synthesize_pairs(frames, pairs, K);
  std::vector<ValidMask> keep = reference.masks;
  // derivative[j][p] holds one value per pixel and channel.
  std::vector<std::vector<std::vector<double>>> derivative(n_unknowns);
  for (std::size_t j = 0; j < n_unknowns; ++j) {
    const auto wide_p = detail::synthesize_pairs(detail::perturbed(frames, j, h), pairs, K);
    const auto wide_m = detail::synthesize_pairs(detail::perturbed(frames, j, -h), pairs, K);
    const auto near_p = detail::synthesize_pairs(detail::perturbed(frames, j, 0.5 * h), pairs, K);
    const auto near_m = detail::synthesize_pairs(detail::perturbed(frames, j, -0.5 * h), pairs, K);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const int C = wide_p.synthesized[p].channels;
      std::vector<double>& d = derivative[j].emplace_back(wide_p.synthesized[p].data.size());
      for (std::size_t i = 0; i < keep[p].valid.size(); ++i) {
        const bool valid = wide_p.masks[p].valid[i] && wide_m.masks[p].valid[i] && near_p.masks[p].valid[i] &&
                           near_m.masks[p].valid[i];
        if (!valid) keep[p].valid[i] = 0;
        if (!keep[p].valid[i]) continue;
        for (int c = 0; c < C; ++c) {
          const std::size_t k = i * C + c;
          const double wide = (wide_p.synthesized[p].data[k] - wide_m.synthesized[p].data[k]) / (2.0 * h);
          const double near = (near_p.synthesized[p].data[k] - near_m.synthesized[p].data[k]) / h;
          if (std::abs(wide - near) > 1e-6 * (1.0 + std::abs(wide))) keep[p].valid[i] = 0;
          d[k] = wide;
        }
      }
    }
  }
  std::size_t rows = 0;
  for (std::size_t p = 0; p < pairs.size(); ++p) rows += keep[p].count() * frames[pairs[p].source].image.channels;

  LinearizedSystem sys;
  sys.residual_count = rows;
  sys.jacobian.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_unknowns));
  for (std::size_t j = 0; j < n_unknowns; ++j) {
    Eigen::Index r = 0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const int C = frames[pairs[p].source].image.channels;
      for (std::size_t i = 0; i < keep[p].valid.size(); ++i) {
        if (!keep[p].valid[i]) continue;
        // residual = I_t - Î_t, so its derivative is -dÎ_t.
        for (int c = 0; c < C; ++c) sys.jacobian(r++, static_cast<Eigen::Index>(j)) = -derivative[j][p][i * C + c];
      }
    }
  }
  sys.singular_values = Eigen::JacobiSVD<Eigen::MatrixXd>(sys.jacobian).singularValues();
  return sys;
}

}  // namespace dscloc
