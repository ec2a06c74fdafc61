#pragma once

// Trajectory alignment, pose error statistics, median-scaled depth metrics and
// trajectory plot/table export.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dscloc/geometry.hpp"
#include "dscloc/image.hpp"

namespace dscloc {

/// x ↦ s R x + t
struct Sim3 {
  double scale = 1.0;
  Mat3<double> rotation = Mat3<double>::identity();
  Vec3<double> translation{0.0, 0.0, 0.0};

  Vec3<double> apply(const Vec3<double>& x) const { return (scale * (rotation * x)) + translation; }

  /// Applied to a camera-to-world pose: the camera center moves with the
  /// points and the attitude is left-multiplied by the rotation.
  Pose<double> apply(const Pose<double>& p) const {
    return {matrix_to_axis_angle(rotation * axis_angle_to_matrix(p.attitude)), apply(p.position)};
  }
};

class DegenerateInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Least-squares similarity taking src onto dst (closed form from the
/// centered cross-covariance SVD with reflection correction).
inline Sim3 umeyama_sim3(std::span<const Vec3<double>> src, std::span<const Vec3<double>> dst) {
  if (src.size() != dst.size()) throw std::invalid_argument("umeyama_sim3: point counts differ");
  if (src.size() < 3) throw DegenerateInputError("umeyama_sim3: need at least 3 correspondences");
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::Matrix3Xd X(3, n), Y(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      X(k, i) = src[i][k];
      Y(k, i) = dst[i][k];
    }
  }
  const Eigen::Vector3d mx = X.rowwise().mean(), my = Y.rowwise().mean();
  const Eigen::Matrix3Xd Xc = X.colwise() - mx, Yc = Y.colwise() - my;
  const double var_x = Xc.squaredNorm() / static_cast<double>(n);
  const Eigen::Matrix3d cov = Yc * Xc.transpose() / static_cast<double>(n);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  const double tol = 1e-12 * std::max(1.0, sv(0));
  if (var_x <= 1e-24 || sv(1) <= tol) throw DegenerateInputError("umeyama_sim3: collinear or coincident points");
  Eigen::Matrix3d S = Eigen::Matrix3d::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) S(2, 2) = -1.0;
  const Eigen::Matrix3d R = svd.matrixU() * S * svd.matrixV().transpose();
  const double s = (sv.asDiagonal() * S).trace() / var_x;
  const Eigen::Vector3d t = my - s * R * mx;
  Sim3 out;
  out.scale = s;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out.rotation(r, c) = R(r, c);
    out.translation[r] = t(r);
  }
  return out;
}

/// Alignment of predicted camera centers onto ground-truth ones.
inline Sim3 align_trajectory(std::span<const Pose<double>> pred, std::span<const Pose<double>> gt) {
  std::vector<Vec3<double>> src, dst;
  for (const auto& p : pred) src.push_back(p.position);
  for (const auto& p : gt) dst.push_back(p.position);
  return umeyama_sim3(src, dst);
}

/// Geodesic angle between two rotations, degrees.
inline double rotation_angle_deg(const Mat3<double>& a, const Mat3<double>& b) {
  const double c = std::clamp(0.5 * ((a.transpose() * b).trace() - 1.0), -1.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

struct FramePoseError {
  double position = 0.0;
  double attitude_deg = 0.0;
};

struct PoseErrorReport {
  double median_position = 0.0;
  double median_attitude_deg = 0.0;
  std::vector<FramePoseError> frames;
};

inline PoseErrorReport pose_errors(std::span<const Pose<double>> pred, std::span<const Pose<double>> gt,
                                   const Sim3& align) {
  if (pred.size() != gt.size()) throw std::invalid_argument("pose_errors: length mismatch");
  if (pred.empty()) throw std::invalid_argument("pose_errors: empty input");
  PoseErrorReport report;
  std::vector<double> pos, att;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Pose<double> a = align.apply(pred[i]);
    FramePoseError e{norm(a.position - gt[i].position),
                     rotation_angle_deg(axis_angle_to_matrix(a.attitude), axis_angle_to_matrix(gt[i].attitude))};
    report.frames.push_back(e);
    pos.push_back(e.position);
    att.push_back(e.attitude_deg);
  }
  report.median_position = median_of(pos);
  report.median_attitude_deg = median_of(att);
  return report;
}

/// Largest pairwise camera-center distance.
inline double trajectory_diameter(std::span<const Pose<double>> poses) {
  double d = 0.0;
  for (std::size_t i = 0; i < poses.size(); ++i)
    for (std::size_t j = i + 1; j < poses.size(); ++j) d = std::max(d, norm(poses[i].position - poses[j].position));
  return d;
}

// ---------------------------------------------------------------------------
// Depth metrics
// ---------------------------------------------------------------------------

struct DepthMetricReport {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double scale_std_over_med = 0.0;
  std::size_t frames_used = 0;
  std::vector<std::size_t> skipped_frames;  // empty mask
  std::vector<double> scale_factors;
};

/// Per-frame median scaling inside [min_depth, max_depth] of the ground truth,
/// metrics averaged over frames. Non-positive or non-finite ground-truth pixels
/// are treated as invalid.
inline DepthMetricReport depth_metrics(std::span<const DepthMap<double>> pred, std::span<const DepthMap<double>> gt,
                                       double min_depth = 0.1, double max_depth = 10.0) {
  if (pred.size() != gt.size()) throw std::invalid_argument("depth_metrics: frame counts differ");
  if (!(min_depth > 0.0 && max_depth > min_depth)) throw std::invalid_argument("depth_metrics: invalid depth range");
  DepthMetricReport r;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    if (!pred[f].same_shape(gt[f])) throw std::invalid_argument("depth_metrics: shape mismatch in frame " + std::to_string(f));
    std::vector<double> g, p;
    for (std::size_t i = 0; i < gt[f].data.size(); ++i) {
      const double d = gt[f].data[i];
      if (std::isfinite(d) && d >= min_depth && d <= max_depth) {
        g.push_back(d);
        p.push_back(pred[f].data[i]);
      }
    }
    if (g.empty()) {
      r.skipped_frames.push_back(f);
      continue;
    }
    const double scale = median_of(g) / median_of(p);
    r.scale_factors.push_back(scale);
    double abs_rel = 0, sq_rel = 0, sq = 0, sq_log = 0, d1 = 0, d2 = 0, d3 = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double ph = scale * p[i], gi = g[i];
      const double diff = ph - gi;
      abs_rel += std::abs(diff) / gi;
      sq_rel += diff * diff / gi;
      sq += diff * diff;
      const double dl = std::log(ph) - std::log(gi);
      sq_log += dl * dl;
      const double ratio = std::max(ph / gi, gi / ph);
      d1 += ratio < 1.25;
      d2 += ratio < 1.25 * 1.25;
      d3 += ratio < 1.25 * 1.25 * 1.25;
    }
    const double n = static_cast<double>(g.size());
    r.abs_rel += abs_rel / n;
    r.sq_rel += sq_rel / n;
    r.rmse += std::sqrt(sq / n);
    r.rmse_log += std::sqrt(sq_log / n);
    r.delta1 += d1 / n;
    r.delta2 += d2 / n;
    r.delta3 += d3 / n;
    ++r.frames_used;
  }
  if (r.frames_used == 0) throw std::invalid_argument("depth_metrics: every frame has an empty mask");
  const double m = static_cast<double>(r.frames_used);
  for (double* x : {&r.abs_rel, &r.sq_rel, &r.rmse, &r.rmse_log, &r.delta1, &r.delta2, &r.delta3}) *x /= m;
  double mean = 0.0;
  for (double s : r.scale_factors) mean += s;
  mean /= m;
  double var = 0.0;
  for (double s : r.scale_factors) var += (s - mean) * (s - mean);
  r.scale_std_over_med = std::sqrt(var / m) / median_of(r.scale_factors);
  return r;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Writes `<stem>.svg` (top-down x/z view: ground-truth polyline, aligned
/// predictions, error segments) and `<stem>.csv` (per-frame errors).
inline void trajectory_export(std::span<const Pose<double>> pred, std::span<const Pose<double>> gt, const Sim3& align,
                              const std::filesystem::path& svg_path, const std::filesystem::path& csv_path) {
  const PoseErrorReport report = pose_errors(pred, gt, align);
  std::vector<Pose<double>> aligned;
  for (const auto& p : pred) aligned.push_back(align.apply(p));

  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  csv.precision(17);
  csv << "frame,gt_x,gt_y,gt_z,pred_x,pred_y,pred_z,position_error,attitude_error_deg\n";
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto& g = gt[i].position;
    const auto& a = aligned[i].position;
    csv << i << ',' << g[0] << ',' << g[1] << ',' << g[2] << ',' << a[0] << ',' << a[1] << ',' << a[2] << ','
        << report.frames[i].position << ',' << report.frames[i].attitude_deg << '\n';
  }
  if (!csv) throw std::runtime_error("write failed: " + csv_path.string());

  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_z = lo_x, hi_z = -lo_x;
  auto extend = [&](const Vec3<double>& p) {
    lo_x = std::min(lo_x, p[0]);
    hi_x = std::max(hi_x, p[0]);
    lo_z = std::min(lo_z, p[2]);
    hi_z = std::max(hi_z, p[2]);
  };
  for (const auto& p : gt) extend(p.position);
  for (const auto& p : aligned) extend(p.position);
  const double span = std::max({hi_x - lo_x, hi_z - lo_z, 1e-9});
  const double size = 480.0, margin = 40.0, k = (size - 2 * margin) / span;
  auto sx = [&](const Vec3<double>& p) { return margin + (p[0] - lo_x) * k; };
  auto sy = [&](const Vec3<double>& p) { return size - margin - (p[2] - lo_z) * k; };

  std::ofstream svg(svg_path);
  if (!svg) throw std::runtime_error("cannot write " + svg_path.string());
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<polyline fill=\"none\" stroke=\"blue\" "
         "stroke-width=\"2\" points=\"";
  for (const auto& p : gt) svg << sx(p.position) << ',' << sy(p.position) << ' ';
  svg << "\"/>\n";
  for (std::size_t i = 0; i < gt.size(); ++i) {
    svg << "<line x1=\"" << sx(gt[i].position) << "\" y1=\"" << sy(gt[i].position) << "\" x2=\""
        << sx(aligned[i].position) << "\" y2=\"" << sy(aligned[i].position) << "\" stroke=\"red\"/>\n";
    svg << "<circle cx=\"" << sx(aligned[i].position) << "\" cy=\"" << sy(aligned[i].position)
        << "\" r=\"3\" fill=\"orange\"/>\n";
  }
  svg << "<text x=\"10\" y=\"20\" font-size=\"12\">top view (x right, z up), " << gt.size() << " frames</text>\n</svg>\n";
  if (!svg) throw std::runtime_error("write failed: " + svg_path.string());
}

}  // namespace dscloc
