#pragma once

// Glue between the on-disk dataset, the fit and the evaluation stack. Shared
// by the command-line tool and the acceptance runner.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "dscloc/direct_fit.hpp"
#include "dscloc/eval_metrics.hpp"
#include "dscloc/io/checkpoint.hpp"
#include "dscloc/io/config.hpp"
#include "dscloc/io/dataset.hpp"
#include "dscloc/synthetic_scene.hpp"

namespace dscloc {

/// Pinhole intrinsics used for generated scenes: 67° horizontal field of view,
/// principal point at the image center.
inline Intrinsics synthetic_intrinsics(int width, int height) {
  const double f = 0.75 * width;
  return {f, f, 0.5 * (width - 1), 0.5 * (height - 1)};
}

struct SyntheticSceneOptions {
  TrajectoryOptions trajectory;
  int width = 80;
  int height = 60;
  std::uint64_t scene_seed = 1;
};

/// Writes the rendered sequence into `dir` and returns a run config pointing at
/// it, with the generator's intrinsics filled in.
inline io::RunConfig generate_synthetic_scene(const SyntheticSceneOptions& opt, const std::filesystem::path& dir,
                                              io::RunConfig base = {}) {
  const Intrinsics K = synthetic_intrinsics(opt.width, opt.height);
  io::generate_dataset(default_room(opt.scene_seed), generate_trajectory(opt.trajectory), K, opt.width, opt.height,
                       dir);
  base.data_dir = dir.string();
  base.split.clear();
  base.image_width_px = opt.width;
  base.image_height_px = opt.height;
  base.intrinsics = K;
  return base;
}

inline FitDataset fit_dataset(const io::Dataset& data, const io::RunConfig& config) {
  config.validate();
  FitDataset out{data.colors, *config.intrinsics, data.depths, data.poses};
  if (!data.colors.empty() && !data.colors.front().same_shape(config.image_width_px, config.image_height_px))
    throw io::ConfigError("image size in config (" + std::to_string(config.image_width_px) + "x" +
                          std::to_string(config.image_height_px) + ") differs from the dataset (" +
                          std::to_string(data.colors.front().width) + "x" +
                          std::to_string(data.colors.front().height) + ")");
  return out;
}

inline std::size_t frame_count(const ParamStore& params, const FrameLayout& layout) {
  if (params.size() % layout.frame_size() != 0) throw std::invalid_argument("parameter store does not match layout");
  return params.size() / layout.frame_size();
}

inline std::vector<Pose<double>> predicted_poses(const ParamStore& params, const FrameLayout& layout,
                                                 const Intrinsics& K, AggregateMode mode) {
  std::vector<Pose<double>> out;
  for (std::size_t f = 0; f < frame_count(params, layout); ++f)
    out.push_back(predict_pose(params.view(frame_slice_name(f)), layout, K, mode));
  return out;
}

inline std::vector<DepthMap<double>> predicted_depths(const ParamStore& params, const FrameLayout& layout) {
  std::vector<DepthMap<double>> out;
  for (std::size_t f = 0; f < frame_count(params, layout); ++f)
    out.push_back(depth_from_logits(params.view(frame_slice_name(f)).subspan(0, layout.depth_size()), layout.width,
                                    layout.height));
  return out;
}

struct PoseEvaluation {
  Sim3 alignment;
  PoseErrorReport errors;
  double diameter = 0.0;

  double position_fraction() const { return errors.median_position / diameter; }
};

inline PoseEvaluation evaluate_poses(std::span<const Pose<double>> pred, std::span<const Pose<double>> gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("checkpoint holds " + std::to_string(pred.size()) + " frames, dataset holds " +
                                std::to_string(gt.size()));
  PoseEvaluation out;
  out.alignment = align_trajectory(pred, gt);
  out.errors = pose_errors(pred, gt, out.alignment);
  out.diameter = trajectory_diameter(gt);
  return out;
}

inline std::string format_pose_table(const PoseEvaluation& e) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "position_error_m,attitude_error_deg,position_error_pct_diameter\n%.6f,%.4f,%.4f\n",
                e.errors.median_position, e.errors.median_attitude_deg, 100.0 * e.position_fraction());
  return buf;
}

inline std::string format_depth_table(const DepthMetricReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,std_over_med\n"
                "%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.delta1, r.delta2, r.delta3, r.scale_std_over_med);
  return buf;
}

}  // namespace dscloc
