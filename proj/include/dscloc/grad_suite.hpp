#pragma once

// Finite-difference checks of every differentiable operation and of the
// composed loop-set loss. Each check projects a batch of independent
// instances onto a scalar with fixed random weights, so a single FD pass
// covers at least `min_coordinates` input coordinates.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dscloc/direct_fit.hpp"
#include "dscloc/geometry.hpp"
#include "dscloc/losses.hpp"
#include "dscloc/optim.hpp"
#include "dscloc/synthetic_scene.hpp"
#include "dscloc/view_synthesis.hpp"

namespace dscloc {

struct GradCheck {
  std::string name;
  std::vector<double> params;
  LossFunction loss;
  std::function<double(std::span<const double>)> value;
};

struct GradCheckResult {
  std::string name;
  std::size_t parameters = 0;
  FdCheckReport report;
  bool passed = false;
};

struct GradSuiteOptions {
  std::uint64_t seed = 11;
  double tolerance = 1e-4;
  std::size_t min_coordinates = 100;
  std::size_t samples = 150;
  FdCheckOptions fd{};
};

namespace detail {

template <class F>
GradCheck make_check(std::string name, std::vector<double> params, F f) {
  return {std::move(name), std::move(params), [f](std::span<const ad::Var> x) { return f(x); },
          [f](std::span<const double> x) { return f(x); }};
}

template <class T>
using Elem = std::remove_const_t<T>;

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  double operator()(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::vector<double> many(std::size_t n, double lo, double hi) {
    std::vector<double> out(n);
    for (auto& x : out) x = (*this)(lo, hi);
    return out;
  }

 private:
  std::mt19937_64 rng_;
};

template <class T>
T weighted_sum(const std::vector<T>& xs, const std::vector<double>& w) {
  return lin_comb(std::span<const T>(xs), std::span<const double>(w.data(), xs.size()));
}

template <class T>
void push_matrix(std::vector<T>& out, const Mat3<T>& m) {
  for (const auto& x : m.m) out.push_back(x);
}

template <class T>
void push_vec(std::vector<T>& out, const Vec3<T>& v) {
  for (const auto& x : v.v) out.push_back(x);
}

// Three 8x6 frames of the synthetic room on a short arc.
struct TinyScene {
  Intrinsics K{6.0, 6.0, 3.5, 2.5};
  std::vector<ImageBuffer> images;
  std::vector<DepthMap<double>> depths;
  std::vector<Pose<double>> poses;
};

inline TinyScene tiny_scene(std::uint64_t seed) {
  TinyScene s;
  const PlanarScene scene = default_room(seed);
  TrajectoryOptions opt;
  opt.n_frames = 3;
  for (const auto& f : generate_trajectory(opt)) {
    const RenderedFrame r = render_frame(scene, f.pose, s.K, 8, 6);
    s.images.push_back(r.color);
    s.depths.push_back(r.depth);
    s.poses.push_back(f.pose);
  }
  return s;
}

}  // namespace detail

inline std::vector<GradCheck> gradient_checks(std::uint64_t seed) {
  using detail::Elem;
  detail::Draw draw(seed);
  const Intrinsics K{60.0, 58.0, 39.5, 29.5};
  std::vector<GradCheck> checks;

  {
    const std::size_t n = 120;
    auto px = draw.many(2 * n, 0.0, 79.0);
    auto w = draw.many(3 * n, -1.0, 1.0);
    checks.push_back(detail::make_check("back_project", draw.many(n, 0.5, 5.0), [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      std::vector<T> out;
      for (std::size_t i = 0; i < n; ++i) detail::push_vec(out, back_project(Pixel{px[2 * i], px[2 * i + 1]}, x[i], K));
      return detail::weighted_sum(out, w);
    }));
  }
  {
    const std::size_t n = 60;
    std::vector<double> uv;
    for (std::size_t i = 0; i < n; ++i) {
      uv.push_back(draw(0.0, 79.0));
      uv.push_back(draw(0.0, 59.0));
    }
    auto w = draw.many(9 * n, -1.0, 1.0);
    checks.push_back(detail::make_check("ray_rotation", uv, [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      std::vector<T> out;
      for (std::size_t i = 0; i < n; ++i) detail::push_matrix(out, ray_rotation(x[2 * i], x[2 * i + 1], K));
      return detail::weighted_sum(out, w);
    }));
  }
  {
    const std::size_t n = 40;
    auto w = draw.many(9 * n, -1.0, 1.0);
    checks.push_back(detail::make_check("axis_angle_to_matrix", draw.many(3 * n, -1.5, 1.5), [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      std::vector<T> out;
      for (std::size_t i = 0; i < n; ++i)
        detail::push_matrix(out, axis_angle_to_matrix(Vec3<T>{x[3 * i], x[3 * i + 1], x[3 * i + 2]}));
      return detail::weighted_sum(out, w);
    }));
  }
  {
    const std::size_t n = 14;
    std::vector<double> entries;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3<double> aa{draw(-1.5, 1.5), draw(-1.5, 1.5), draw(-1.5, 1.5)};
      for (double e : axis_angle_to_matrix(aa).m) entries.push_back(e);
    }
    auto w = draw.many(3 * n, -1.0, 1.0);
    checks.push_back(detail::make_check("matrix_to_axis_angle", entries, [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      std::vector<T> out;
      for (std::size_t i = 0; i < n; ++i) {
        Mat3<T> R;
        for (int k = 0; k < 9; ++k) R.m[k] = x[9 * i + k];
        detail::push_vec(out, matrix_to_axis_angle(R));
      }
      return detail::weighted_sum(out, w);
    }));
  }
  {
    const std::size_t n = 18;
    std::vector<double> p;
    std::vector<double> px;
    for (std::size_t i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) p.push_back(draw(-1.0, 1.0));
      for (int k = 0; k < 3; ++k) p.push_back(draw(-2.0, 2.0));
      p.push_back(draw(0.5, 5.0));
      px.push_back(draw(0.0, 79.0));
      px.push_back(draw(0.0, 59.0));
    }
    auto w = draw.many(6 * n, -1.0, 1.0);
    checks.push_back(detail::make_check("pose_from_pixel", p, [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      std::vector<T> out;
      for (std::size_t i = 0; i < n; ++i) {
        const Pixel pix{px[2 * i], px[2 * i + 1]};
        const Vec3<T> q = back_project(pix, x[7 * i + 6], K);
        const auto pose = pose_from_pixel(std::span<const T, 6>(x.subspan(7 * i, 6)), q, pix, K);
        for (const auto& c : pose.vector6()) out.push_back(c);
      }
      return detail::weighted_sum(out, w);
    }));
  }
  {
    const std::size_t n = 21;
    std::vector<double> p;
    for (std::size_t i = 0; i < n; ++i) {
      for (int k = 0; k < 3; ++k) p.push_back(draw(0.1, 0.6));
      for (int k = 0; k < 3; ++k) p.push_back(draw(-2.0, 2.0));
    }
    auto w = draw.many(6, -1.0, 1.0);
    auto poses_of = [n](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      std::vector<Pose<T>> poses;
      for (std::size_t i = 0; i < n; ++i) poses.push_back(Pose<T>::from_vector6(std::span<const T, 6>(x.subspan(6 * i, 6))));
      return poses;
    };
    checks.push_back(detail::make_check("aggregate_pose_mean", p, [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      const auto poses = poses_of(x);
      const auto m = mean_pose(std::span<const Pose<T>>(poses)).vector6();
      return detail::weighted_sum(std::vector<T>(m.begin(), m.end()), w);
    }));
    checks.push_back(detail::make_check("pose_coordinate_loss", p, [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      const auto poses = poses_of(x);
      const std::span<const Pose<T>> view(poses);
      return pose_coordinate_loss(view, mean_pose(view));
    }));
  }
  {
    const std::size_t n = 10;
    std::vector<double> p;
    for (std::size_t i = 0; i < 12 * n; ++i) p.push_back(draw(-1.0, 1.0));
    auto w = draw.many(12 * n, -1.0, 1.0);
    checks.push_back(detail::make_check("relative_transform", p, [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      std::vector<T> out;
      for (std::size_t i = 0; i < n; ++i) {
        const auto a = Pose<T>::from_vector6(std::span<const T, 6>(x.subspan(12 * i, 6)));
        const auto b = Pose<T>::from_vector6(std::span<const T, 6>(x.subspan(12 * i + 6, 6)));
        const auto rel = relative_transform(a, b);
        detail::push_matrix(out, rel.rotation);
        detail::push_vec(out, rel.translation);
      }
      return detail::weighted_sum(out, w);
    }));
  }
  {
    // Depth (12x10) plus the source pose; the target camera sits at the origin.
    const int W = 12, H = 10;
    const Intrinsics Ks{10.0, 10.0, 5.5, 4.5};
    std::vector<double> p = draw.many(std::size_t(W) * H, 2.0, 4.0);
    for (double v : {0.02, -0.03, 0.01, 0.05, 0.02, -0.04}) p.push_back(v);
    auto w = draw.many(2 * std::size_t(W) * H, -1.0, 1.0);
    checks.push_back(detail::make_check("pixel_map", p, [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      DepthMap<T> depth(W, H, 1);
      for (std::size_t i = 0; i < depth.data.size(); ++i) depth.data[i] = x[i];
      const auto source = Pose<T>::from_vector6(std::span<const T, 6>(x.subspan(std::size_t(W) * H, 6)));
      const auto rel = relative_transform(Pose<T>{}, source);
      const auto [map, mask] = pixel_map(depth, rel, Ks, Ks, W + 8, H + 8);
      std::vector<T> out;
      std::vector<double> ws;
      for (std::size_t i = 0; i < map.u.size(); ++i) {
        if (!mask.valid[i]) continue;
        out.push_back(map.u[i]);
        out.push_back(map.v[i]);
        ws.push_back(w[2 * i]);
        ws.push_back(w[2 * i + 1]);
      }
      return detail::weighted_sum(out, ws);
    }));
  }
  {
    const int W = 12, H = 10, C = 1, n_coords = 70;
    std::vector<double> p = draw.many(std::size_t(W) * H * C, 0.0, 1.0);
    for (int i = 0; i < n_coords; ++i) {
      p.push_back(draw(0.05, W - 1.05));
      p.push_back(draw(0.05, H - 1.05));
    }
    auto w = draw.many(n_coords * C, -1.0, 1.0);
    checks.push_back(detail::make_check("bilinear_sample", p, [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      Image<T> img(W, H, C);
      for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = x[i];
      PixelMap<T> map(n_coords, 1);
      const std::size_t base = img.data.size();
      for (int i = 0; i < n_coords; ++i) {
        map.u[i] = x[base + 2 * i];
        map.v[i] = x[base + 2 * i + 1];
      }
      const auto out = bilinear_sample(img, map, ValidMask(n_coords, 1, true));
      return detail::weighted_sum(out.data, w);
    }));
  }
  {
    const int W = 10, H = 8, C = 2;
    const std::size_t n = std::size_t(W) * H * C;
    std::vector<double> p = draw.many(2 * n, 0.0, 1.0);
    auto w = draw.many(n, -1.0, 1.0);
    checks.push_back(detail::make_check("ssim_map", p, [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      Image<T> a(W, H, C), b(W, H, C);
      for (std::size_t i = 0; i < n; ++i) {
        a.data[i] = x[i];
        b.data[i] = x[n + i];
      }
      return detail::weighted_sum(ssim_map(a, b).data, w);
    }));
  }
  {
    const int W = 10, H = 8, C = 3;
    ImageBuffer target(W, H, C);
    target.data = draw.many(target.data.size(), 0.0, 1.0);
    ValidMask mask(W, H, true);
    for (std::size_t i = 0; i < mask.valid.size(); i += 7) mask.valid[i] = 0;
    checks.push_back(detail::make_check("photometric_loss", draw.many(target.data.size(), 0.0, 1.0), [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      Image<T> synth(W, H, C);
      for (std::size_t i = 0; i < synth.data.size(); ++i) synth.data[i] = x[i];
      return *photometric_loss(target, synth, mask, 0.85);
    }));
  }
  {
    const int W = 12, H = 10;
    ImageBuffer image(W, H, 3);
    image.data = draw.many(image.data.size(), 0.0, 1.0);
    checks.push_back(detail::make_check("smoothness_loss", draw.many(std::size_t(W) * H, 0.5, 5.0), [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      DepthMap<T> depth(W, H, 1);
      for (std::size_t i = 0; i < depth.data.size(); ++i) depth.data[i] = x[i];
      return smoothness_loss(depth, image);
    }));
  }
  {
    const std::size_t n = 40;
    std::vector<LossWeights> weights(n);
    for (auto& lw : weights) lw = {0.85, draw(1e-4, 1.0), draw(1e-4, 1.0)};
    checks.push_back(detail::make_check("total_loss", draw.many(3 * n, 0.0, 1.0), [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      std::vector<T> out;
      for (std::size_t i = 0; i < n; ++i) out.push_back(total_loss(x[3 * i], x[3 * i + 1], x[3 * i + 2], weights[i]));
      return detail::weighted_sum(out, std::vector<double>(n, 1.0));
    }));
  }
  {
    const std::size_t n = 120;
    auto w = draw.many(n, -1.0, 1.0);
    checks.push_back(detail::make_check("depth_from_logit", draw.many(n, -6.0, 6.0), [=](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      std::vector<T> out;
      for (std::size_t i = 0; i < n; ++i) out.push_back(depth_from_logit(x[i]));
      return detail::weighted_sum(out, w);
    }));
  }
  {
    // Composed loss: three 8x6 frames, 2x2 DSC grids, all six loop pairs,
    // evaluated near (not at) the ground-truth parameters.
    const auto scene = detail::tiny_scene(seed);
    FitDataset data{scene.images, scene.K, scene.depths, scene.poses};
    const FrameLayout layout = data.layout(4);
    const ParamStore gt = ground_truth_params(data, layout);
    std::vector<double> p(gt.values().begin(), gt.values().end());
    for (auto& v : p) v += draw(-0.02, 0.02);
    auto set = std::make_shared<LoopSet>();
    set->layout = layout;
    set->K = scene.K;
    set->weights = LossWeights{0.85, 0.05, 0.05};
    const std::vector<int> local{0, 1, 2};
    set->pairs = lcvs_pairs(local);
    auto images = std::make_shared<std::vector<ImageBuffer>>(scene.images);
    for (const auto& img : *images) set->images.push_back(&img);
    checks.push_back(detail::make_check("loop_set_total_loss", p, [set, images](auto x) {
      using T = Elem<typename decltype(x)::element_type>;
      return loop_set_loss<T>(*set, x).total;
    }));
  }
  return checks;
}

inline GradCheckResult run_gradient_check(const GradCheck& check, const GradSuiteOptions& options) {
  FdCheckOptions fd = options.fd;
  fd.sample_count = options.samples;
  GradCheckResult r{check.name, check.params.size(), finite_difference_check(check.loss, check.params, fd, check.value),
                    false};
  r.passed = r.report.checked >= options.min_coordinates && r.report.max_rel_error < options.tolerance;
  return r;
}

inline std::vector<GradCheckResult> run_gradient_suite(const GradSuiteOptions& options = {}) {
  std::vector<GradCheckResult> out;
  for (const auto& check : gradient_checks(options.seed)) out.push_back(run_gradient_check(check, options));
  return out;
}

}  // namespace dscloc
