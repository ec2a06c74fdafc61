#pragma once

// Per-frame optimizable depth-logit grids and directed scene coordinate (DSC)
// grids, the loop-closed training loss over a frame set, and the Adam fit loop.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dscloc/geometry.hpp"
#include "dscloc/image.hpp"
#include "dscloc/losses.hpp"
#include "dscloc/optim.hpp"
#include "dscloc/view_synthesis.hpp"

namespace dscloc {

// ---------------------------------------------------------------------------
// Depth parametrization: D = 1 / (a σ(logit) + b), D ∈ [0.1, 100]
// ---------------------------------------------------------------------------

struct DepthRange {
  static constexpr double kMin = 0.1;
  static constexpr double kMax = 100.0;
  static constexpr double b = 1.0 / kMax;
  static constexpr double a = 1.0 / kMin - b;
};

template <class T>
T depth_from_logit(const T& logit) {
  if constexpr (std::same_as<T, ad::Var>) {
    const double s = sigmoid(logit.value());
    const double d = 1.0 / (DepthRange::a * s + DepthRange::b);
    return ad::fused<1>(ad::Op::kLogitDepth, d, {&logit}, {-DepthRange::a * s * (1.0 - s) * d * d});
  } else {
    return 1.0 / (DepthRange::a * sigmoid(logit) + DepthRange::b);
  }
}

/// Inverse mapping; the depth is clamped just inside the open range.
inline double logit_from_depth(double depth) {
  const double d = std::clamp(depth, DepthRange::kMin * (1.0 + 1e-9), DepthRange::kMax * (1.0 - 1e-9));
  const double s = (1.0 / d - DepthRange::b) / DepthRange::a;
  return std::log(s / (1.0 - s));
}

template <class T>
DepthMap<T> depth_from_logits(std::span<const T> logits, int width, int height) {
  if (logits.size() != std::size_t(width) * height) throw std::invalid_argument("depth_from_logits: size mismatch");
  DepthMap<T> depth(width, height, 1);
  for (std::size_t i = 0; i < logits.size(); ++i) depth.data[i] = depth_from_logit(logits[i]);
  return depth;
}

// ---------------------------------------------------------------------------
// Grid layout
// ---------------------------------------------------------------------------

/// Image size and DSC subsampling factor of one frame. Grid dimensions are
/// ceil(image / factor); partial border blocks pool over their in-bounds pixels.
struct FrameLayout {
  int width = 0;
  int height = 0;
  int factor = 32;

  FrameLayout() = default;
  FrameLayout(int w, int h, int f) : width(w), height(h), factor(f) {
    if (w <= 0 || h <= 0 || f <= 0) throw std::invalid_argument("FrameLayout: dimensions must be positive");
  }

  int grid_width() const { return (width + factor - 1) / factor; }
  int grid_height() const { return (height + factor - 1) / factor; }
  std::size_t cell_count() const { return std::size_t(grid_width()) * grid_height(); }
  std::size_t depth_size() const { return std::size_t(width) * height; }
  std::size_t dsc_size() const { return cell_count() * 6; }
  std::size_t frame_size() const { return depth_size() + dsc_size(); }

  /// Centroid of the block of cell (i, j) in full-resolution pixel coordinates.
  Pixel cell_center(int i, int j) const {
    const int x0 = i * factor, x1 = std::min(x0 + factor, width) - 1;
    const int y0 = j * factor, y1 = std::min(y0 + factor, height) - 1;
    return {0.5 * (x0 + x1), 0.5 * (y0 + y1)};
  }

  bool operator==(const FrameLayout&) const = default;
};

/// Non-overlapping block means aligned to the DSC grid.
template <class T>
Image<T> pooled_depth(const DepthMap<T>& depth, int factor) {
  const FrameLayout layout(depth.width, depth.height, factor);
  Image<T> out(layout.grid_width(), layout.grid_height(), 1);
  std::vector<T> block;
  std::vector<double> weights;
  for (int j = 0; j < out.height; ++j) {
    for (int i = 0; i < out.width; ++i) {
      block.clear();
      for (int y = j * factor; y < std::min((j + 1) * factor, depth.height); ++y)
        for (int x = i * factor; x < std::min((i + 1) * factor, depth.width); ++x) block.push_back(depth.at(x, y));
      weights.assign(block.size(), 1.0 / static_cast<double>(block.size()));
      out.at(i, j) = lin_comb(std::span<const T>(block), std::span<const double>(weights));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pose prediction
// ---------------------------------------------------------------------------

/// View of one frame's parameters: depth logits followed by the DSC grid,
/// cells row-major with channels [gaze axis-angle (3), scene position (3)].
template <class T>
struct FrameParams {
  std::span<const T> depth_logits;
  std::span<const T> dsc;

  static FrameParams split(std::span<const T> frame, const FrameLayout& layout) {
    if (frame.size() != layout.frame_size()) throw std::invalid_argument("FrameParams: size mismatch");
    return {frame.subspan(0, layout.depth_size()), frame.subspan(layout.depth_size(), layout.dsc_size())};
  }
};

/// One pose per DSC cell from the cell's 6-vector and the pooled depth.
template <class T>
std::vector<Pose<T>> cell_poses(const FrameParams<T>& frame, const DepthMap<T>& depth, const FrameLayout& layout,
                                const Intrinsics& K) {
  const Image<T> pooled = pooled_depth(depth, layout.factor);
  std::vector<Pose<T>> poses;
  poses.reserve(layout.cell_count());
  for (int j = 0; j < layout.grid_height(); ++j) {
    for (int i = 0; i < layout.grid_width(); ++i) {
      const Pixel p = layout.cell_center(i, j);
      const Vec3<T> q = back_project(p, pooled.at(i, j), K);
      const std::size_t offset = (std::size_t(j) * layout.grid_width() + i) * 6;
      poses.push_back(pose_from_pixel(std::span<const T, 6>(frame.dsc.subspan(offset, 6)), q, p, K));
    }
  }
  return poses;
}

/// Frame pose: mean of the cell poses (training) or their median (testing).
inline Pose<double> predict_pose(std::span<const double> frame, const FrameLayout& layout, const Intrinsics& K,
                                 AggregateMode mode) {
  const auto params = FrameParams<double>::split(frame, layout);
  const auto depth = depth_from_logits(params.depth_logits, layout.width, layout.height);
  const auto cells = cell_poses(params, depth, layout, K);
  return aggregate_pose(cells, mode);
}

/// DSC grid whose every cell reproduces `pose` given `depth`.
inline std::vector<double> dsc_from_pose_and_depth(const Pose<double>& pose, const DepthMap<double>& depth,
                                                   const FrameLayout& layout, const Intrinsics& K) {
  const Image<double> pooled = pooled_depth(depth, layout.factor);
  std::vector<double> dsc;
  dsc.reserve(layout.dsc_size());
  for (int j = 0; j < layout.grid_height(); ++j) {
    for (int i = 0; i < layout.grid_width(); ++i) {
      const Pixel p = layout.cell_center(i, j);
      const double distance = norm(back_project(p, pooled.at(i, j), K));
      for (double x : dsc_from_pose(pose, distance, p, K)) dsc.push_back(x);
    }
  }
  return dsc;
}

// ---------------------------------------------------------------------------
// Loop-set loss
// ---------------------------------------------------------------------------

/// Frames of one loop-closed set. Parameters of set member k occupy
/// [k * frame_size, (k + 1) * frame_size) of the local parameter vector.
struct LoopSet {
  FrameLayout layout;
  Intrinsics K;
  std::vector<const ImageBuffer*> images;
  std::vector<FramePair> pairs;  // indices into `images`
  LossWeights weights;
};

template <class T>
struct LoopSetTerms {
  T total;
  T photometric;
  T smoothness;
  T pose_coordinate;
  std::size_t valid_pairs = 0;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// L = mean_pairs L_p + w_s mean_frames L_s + w_c mean_frames L_c. Pairs with
/// an empty valid set are dropped from the photometric mean.
template <class T>
LoopSetTerms<T> loop_set_loss(const LoopSet& set, std::span<const T> local) {
  const FrameLayout& layout = set.layout;
  const std::size_t n = set.images.size();
  if (local.size() != n * layout.frame_size()) throw std::invalid_argument("loop_set_loss: parameter size mismatch");
  std::vector<DepthMap<T>> depths;
  std::vector<Pose<T>> poses;
  std::vector<T> smooth_terms, coord_terms;
  for (std::size_t k = 0; k < n; ++k) {
    const auto params = FrameParams<T>::split(local.subspan(k * layout.frame_size(), layout.frame_size()), layout);
    depths.push_back(depth_from_logits(params.depth_logits, layout.width, layout.height));
    const auto cells = cell_poses(params, depths.back(), layout, set.K);
    poses.push_back(mean_pose(std::span<const Pose<T>>(cells)));
    coord_terms.push_back(pose_coordinate_loss(std::span<const Pose<T>>(cells), poses.back()));
    smooth_terms.push_back(smoothness_loss(depths.back(), *set.images[k]));
  }
  std::vector<T> photo_terms;
  for (const FramePair& pair : set.pairs) {
    try {
      const auto rel = relative_transform(poses[pair.target], poses[pair.source]);
      const auto synth = synthesize(*set.images[pair.source], depths[pair.target], rel, set.K, set.K);
      auto lp = photometric_loss(*set.images[pair.target], synth.image, synth.mask, set.weights.alpha);
      if (lp) photo_terms.push_back(*lp);
    } catch (const ad::NonFiniteError& e) {
      std::ostringstream os;
      os << "non-finite loss in pair (target " << pair.target << ", source " << pair.source << "): " << e.what();
      throw FitError(os.str());
    }
  }
  auto mean = [](const std::vector<T>& xs) {
    if (xs.empty()) return T(0.0);
    const std::vector<double> w(xs.size(), 1.0 / static_cast<double>(xs.size()));
    return lin_comb(std::span<const T>(xs), std::span<const double>(w));
  };
  LoopSetTerms<T> out{T(0.0), mean(photo_terms), mean(smooth_terms), mean(coord_terms), photo_terms.size()};
  out.total = total_loss(out.photometric, out.smoothness, out.pose_coordinate, set.weights);
  return out;
}

// ---------------------------------------------------------------------------
// Fit
// ---------------------------------------------------------------------------

enum class InitMode { kRandom, kGroundTruth };

struct FitConfig {
  double learning_rate = 1e-4;
  int epochs = 300;
  int nearby_window_frames = 20;
  double distant_fraction = 0.5;
  int distant_activation_epoch = 200;
  int loop_size = 3;
  LossWeights weights;
  std::uint64_t seed = 0;
  double init_position_noise = 0.01;
  InitMode init_mode = InitMode::kRandom;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
    if (nearby_window_frames < 1) throw std::invalid_argument("nearby_window_frames must be at least 1");
    if (!(distant_fraction >= 0.0 && distant_fraction <= 1.0))
      throw std::invalid_argument("distant_fraction must lie in [0, 1]");
    if (loop_size < 2) throw std::invalid_argument("loop_size must be at least 2");
    if (!(init_position_noise >= 0.0)) throw std::invalid_argument("init_position_noise must be non-negative");
    weights.validate();
  }
};

/// Frames the fit trains on. Ground truth is only consulted for InitMode::kGroundTruth.
struct FitDataset {
  std::vector<ImageBuffer> images;
  Intrinsics K;
  std::vector<DepthMap<double>> gt_depths;
  std::vector<Pose<double>> gt_poses;

  FrameLayout layout(int factor) const {
    if (images.empty()) throw std::invalid_argument("FitDataset: no frames");
    return {images.front().width, images.front().height, factor};
  }
};

inline std::string frame_slice_name(std::size_t frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame%06zu", frame);
  return buf;
}

/// One slice per frame holding [depth logits | DSC grid].
inline ParamStore make_param_store(std::size_t n_frames, const FrameLayout& layout) {
  ParamStore store;
  for (std::size_t f = 0; f < n_frames; ++f) store.add(frame_slice_name(f), layout.frame_size());
  return store;
}

/// Logits 0 (D ≈ 0.1998), zero gaze, scene positions uniform in ±noise.
inline ParamStore init_params(std::size_t n_frames, const FrameLayout& layout, const FitConfig& config,
                              std::uint64_t seed) {
  ParamStore store = make_param_store(n_frames, layout);
  std::mt19937_64 rng(seed);
  for (std::size_t f = 0; f < n_frames; ++f) {
    auto frame = store.view(frame_slice_name(f));
    auto dsc = frame.subspan(layout.depth_size());
    for (std::size_t c = 0; c < layout.cell_count(); ++c)
      for (int k = 3; k < 6; ++k) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        dsc[c * 6 + k] = config.init_position_noise * (2.0 * u - 1.0);
      }
  }
  return store;
}

/// Parameters reproducing the ground-truth depth and poses.
inline ParamStore ground_truth_params(const FitDataset& data, const FrameLayout& layout) {
  if (data.gt_depths.size() != data.images.size() || data.gt_poses.size() != data.images.size())
    throw std::invalid_argument("ground_truth_params: dataset lacks ground truth");
  ParamStore store = make_param_store(data.images.size(), layout);
  for (std::size_t f = 0; f < data.images.size(); ++f) {
    auto frame = store.view(frame_slice_name(f));
    DepthMap<double> depth = data.gt_depths[f];
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
      frame[i] = logit_from_depth(depth.data[i]);
      depth.data[i] = depth_from_logit(frame[i]);
    }
    const auto dsc = dsc_from_pose_and_depth(data.gt_poses[f], depth, layout, data.K);
    std::copy(dsc.begin(), dsc.end(), frame.begin() + layout.depth_size());
  }
  return store;
}

/// Frame set for one step: a uniformly drawn target plus loop_size − 1
/// companions from the nearby window, or from the whole sequence with
/// probability distant_fraction once the activation epoch is reached.
inline std::vector<int> sample_loop_set(std::mt19937_64& rng, int n_frames, const FitConfig& config, int epoch) {
  if (n_frames < config.loop_size) throw std::invalid_argument("sample_loop_set: fewer frames than loop_size");
  auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  const int target = static_cast<int>(uniform() * n_frames);
  bool distant = epoch >= config.distant_activation_epoch && uniform() < config.distant_fraction;
  std::vector<int> candidates;
  auto collect = [&](int lo, int hi) {
    candidates.clear();
    for (int f = std::max(0, lo); f <= std::min(n_frames - 1, hi); ++f)
      if (f != target) candidates.push_back(f);
  };
  if (!distant) collect(target - config.nearby_window_frames, target + config.nearby_window_frames);
  if (distant || static_cast<int>(candidates.size()) < config.loop_size - 1) collect(0, n_frames - 1);
  std::vector<int> set{target};
  for (int k = 0; k < config.loop_size - 1; ++k) {
    const std::size_t pick = static_cast<std::size_t>(uniform() * candidates.size());
    set.push_back(candidates[pick]);
    candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return set;
}

struct FitResult {
  ParamStore params;
  std::vector<double> loss_history;   // per step
  std::vector<double> epoch_losses;   // mean over each epoch's steps
};

struct StepEvaluation {
  LoopSetTerms<double> terms;
  std::vector<double> gradient;  // local, set-member major
};

/// Loss and gradient of one loop set with respect to its members' parameters.
inline StepEvaluation evaluate_loop_set(const FitDataset& data, const ParamStore& params, const FrameLayout& layout,
                                        std::span<const int> frames, const LossWeights& weights) {
  LoopSet set{layout, data.K, {}, {}, weights};
  std::vector<double> local;
  local.reserve(frames.size() * layout.frame_size());
  std::vector<int> local_index(frames.size());
  for (std::size_t k = 0; k < frames.size(); ++k) {
    set.images.push_back(&data.images[frames[k]]);
    const auto view = params.view(frame_slice_name(frames[k]));
    local.insert(local.end(), view.begin(), view.end());
    local_index[k] = static_cast<int>(k);
  }
  set.pairs = lcvs_pairs(local_index);
  StepEvaluation out;
  const auto vg = evaluate_with_gradient(
      [&](std::span<const ad::Var> x) {
        auto terms = loop_set_loss<ad::Var>(set, x);
        out.terms = {terms.total.value(), terms.photometric.value(), terms.smoothness.value(),
                     terms.pose_coordinate.value(), terms.valid_pairs};
        return terms.total;
      },
      local);
  out.gradient = vg.gradient;
  return out;
}

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Adam over sampled loop sets, one step per set. Each frame keeps its own
/// Adam moments and step count, advanced only when the frame is in the set.
inline FitResult fit(const FitDataset& data, const FitConfig& config, int pooling_factor,
                     const EpochCallback& on_epoch = {}) {
  config.validate();
  data.K.validate();
  const FrameLayout layout = data.layout(pooling_factor);
  const int n_frames = static_cast<int>(data.images.size());
  for (const auto& img : data.images)
    if (!img.same_shape(layout.width, layout.height)) throw std::invalid_argument("fit: frame sizes differ");
  FitResult result;
  result.params = config.init_mode == InitMode::kGroundTruth ? ground_truth_params(data, layout)
                                                             : init_params(n_frames, layout, config, config.seed);
  std::vector<AdamState> adam(n_frames, AdamState(layout.frame_size(), config.learning_rate));
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_sum = 0.0;
    for (int step = 0; step < n_frames; ++step) {
      const auto frames = sample_loop_set(rng, n_frames, config, epoch);
      const auto eval = evaluate_loop_set(data, result.params, layout, frames, config.weights);
      if (!std::isfinite(eval.terms.total)) throw FitError("fit: non-finite loss");
      for (std::size_t k = 0; k < frames.size(); ++k) {
        auto view = result.params.view(frame_slice_name(frames[k]));
        adam_step(adam[frames[k]], view,
                  std::span<const double>(eval.gradient).subspan(k * layout.frame_size(), layout.frame_size()));
      }
      result.loss_history.push_back(eval.terms.total);
      epoch_sum += eval.terms.total;
    }
    result.epoch_losses.push_back(epoch_sum / n_frames);
    if (on_epoch) on_epoch(epoch, result.epoch_losses.back());
  }
  return result;
}

}  // namespace dscloc
