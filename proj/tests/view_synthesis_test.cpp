#include <gtest/gtest.h>

#include <cmath>

#include "dscloc/synthetic_scene.hpp"
#include "dscloc/view_synthesis.hpp"
#include "support/oracles.hpp"

using namespace dscloc;

namespace {

ImageBuffer ramp_image(int w, int h, int c) {
  ImageBuffer img(w, h, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) img.at(x, y, k) = 0.5 + 0.4 * std::sin(0.7 * x + 1.3 * y + k);
  return img;
}

RelativeTransform<double> translation(double tx, double ty, double tz) {
  RelativeTransform<double> T;
  T.translation = {tx, ty, tz};
  return T;
}

}  // namespace

TEST(PixelMap, IdentityTransformIsIdentityMap) {
  const Intrinsics K{20.0, 20.0, 3.5, 2.5};
  DepthMap<double> depth(8, 6, 1, 2.0);
  const auto [map, mask] = pixel_map(depth, RelativeTransform<double>{}, K, K, 8, 6);
  EXPECT_EQ(mask.count(), depth.pixel_count());
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) {
      EXPECT_NEAR(map.u[y * 8 + x], x, 1e-12);
      EXPECT_NEAR(map.v[y * 8 + x], y, 1e-12);
    }
}

TEST(PixelMap, FrontoParallelShiftMatchesProjection) {
  const Intrinsics K{10.0, 10.0, 2.0, 2.0};
  const double d = 4.0, b = 0.2;
  DepthMap<double> depth(5, 5, 1, d);
  const auto T = translation(-b, 0.0, 0.0);
  const auto [map, mask] = pixel_map(depth, T, K, K, 5, 5);
  const Eigen::Matrix3d Km = oracle::K_matrix(K);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) {
      const Eigen::Vector3d xs = oracle::lift({double(x), double(y)}, d, K) + Eigen::Vector3d(-b, 0.0, 0.0);
      const Eigen::Vector3d uv = Km * xs / xs(2);
      EXPECT_NEAR(uv(0) - x, -K.fx * b / d, 1e-12);
      EXPECT_EQ(mask.at(x, y), uv(0) >= 0.0);
      if (!mask.at(x, y)) continue;
      EXPECT_NEAR(map.u[y * 5 + x], uv(0), 1e-12);
      EXPECT_NEAR(map.v[y * 5 + x], uv(1), 1e-12);
    }
}

TEST(PixelMap, BehindCameraIsMasked) {
  const Intrinsics K{10.0, 10.0, 2.0, 2.0};
  DepthMap<double> depth(5, 5, 1, 1.0);
  const auto [map, mask] = pixel_map(depth, translation(0.0, 0.0, -2.0), K, K, 5, 5);
  EXPECT_EQ(mask.count(), 0u);
  for (double u : map.u) EXPECT_TRUE(std::isfinite(u));
}

TEST(PixelMap, PointOnTheEpsilonPlaneIsMasked) {
  const Intrinsics K{10.0, 10.0, 2.0, 2.0};
  DepthMap<double> depth(5, 5, 1, 1.0);
  const auto [map, mask] = pixel_map(depth, translation(0.0, 0.0, -1.0), K, K, 5, 5);
  EXPECT_EQ(mask.count(), 0u);
}

TEST(PixelMap, MaskIsSound) {
  oracle::Random rnd(3);
  const Intrinsics K{30.0, 30.0, 11.5, 8.5};
  for (int trial = 0; trial < 50; ++trial) {
    DepthMap<double> depth(24, 18, 1);
    for (double& d : depth.data) d = rnd.uniform(0.3, 5.0);
    const Pose<double> a = rnd.pose(0.4, 0.5), b = rnd.pose(0.4, 0.5);
    const auto rel = relative_transform(a, b);
    const auto [map, mask] = pixel_map(depth, rel, K, K, 24, 18);
    for (int y = 0; y < 18; ++y)
      for (int x = 0; x < 24; ++x) {
        if (!mask.at(x, y)) continue;
        const Eigen::Vector3d xs = oracle::eig(rel.rotation) * oracle::lift({double(x), double(y)}, depth.at(x, y), K) +
                                   oracle::eig(rel.translation);
        EXPECT_GT(xs(2), kMinProjectedDepth);
        const double u = map.u[y * 24 + x], v = map.v[y * 24 + x];
        EXPECT_GE(u, 0.0);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(u, 23.0);
        EXPECT_LE(v, 17.0);
      }
  }
}

TEST(BilinearSample, IntegerCoordinatesAreExact) {
  const ImageBuffer img = ramp_image(6, 5, 2);
  PixelMap<double> coords(3, 1);
  coords.u = {0.0, 3.0, 5.0};
  coords.v = {0.0, 2.0, 4.0};
  const auto out = bilinear_sample(img, coords, ValidMask(3, 1, true));
  for (int c = 0; c < 2; ++c) {
    EXPECT_EQ(out.at(0, 0, c), img.at(0, 0, c));
    EXPECT_EQ(out.at(1, 0, c), img.at(3, 2, c));
    EXPECT_EQ(out.at(2, 0, c), img.at(5, 4, c));
  }
}

TEST(BilinearSample, HorizontalMidpoint) {
  ImageBuffer img(2, 2, 1);
  img.data = {0.0, 1.0, 0.0, 1.0};
  PixelMap<double> coords(1, 1);
  coords.u = {0.5};
  coords.v = {0.0};
  EXPECT_DOUBLE_EQ(bilinear_sample(img, coords, ValidMask(1, 1, true)).at(0, 0), 0.5);
}

TEST(BilinearSample, TwoByTwoClosedForm) {
  ImageBuffer img(2, 2, 1);
  img.data = {0.1, 0.7, 0.4, 0.9};
  PixelMap<double> coords(1, 1);
  coords.u = {0.25};
  coords.v = {0.75};
  const double expected = 0.75 * 0.25 * 0.1 + 0.25 * 0.25 * 0.7 + 0.75 * 0.75 * 0.4 + 0.25 * 0.75 * 0.9;
  EXPECT_NEAR(bilinear_sample(img, coords, ValidMask(1, 1, true)).at(0, 0), expected, 1e-15);
}

TEST(BilinearSample, MaskedPixelsAreZero) {
  const ImageBuffer img = ramp_image(4, 4, 3);
  PixelMap<double> coords(2, 1);
  coords.u = {1.5, 1.5};
  coords.v = {1.5, 1.5};
  ValidMask mask(2, 1, true);
  mask.valid[1] = 0;
  const auto out = bilinear_sample(img, coords, mask);
  for (int c = 0; c < 3; ++c) {
    EXPECT_GT(out.at(0, 0, c), 0.0);
    EXPECT_EQ(out.at(1, 0, c), 0.0);
  }
}

TEST(Synthesize, IdentityReproducesSource) {
  const Intrinsics K{40.0, 40.0, 15.5, 11.5};
  const ImageBuffer src = ramp_image(32, 24, 3);
  oracle::Random rnd(4);
  DepthMap<double> depth(32, 24, 1);
  for (double& d : depth.data) d = rnd.uniform(0.5, 9.0);
  const auto out = synthesize(src, depth, RelativeTransform<double>{}, K, K);
  for (int y = 1; y + 1 < 24; ++y)
    for (int x = 1; x + 1 < 32; ++x) EXPECT_TRUE(out.mask.at(x, y)) << x << "," << y;
  for (std::size_t i = 0; i < src.data.size(); ++i)
    if (out.mask.valid[i / 3]) {
      EXPECT_NEAR(out.image.data[i], src.data[i], 1e-12);
    }
}

TEST(Synthesize, ExtremeTransformLeavesNothingValid) {
  const Intrinsics K{40.0, 40.0, 15.5, 11.5};
  const ImageBuffer src = ramp_image(32, 24, 1);
  const DepthMap<double> depth(32, 24, 1, 2.0);
  const auto out = synthesize(src, depth, translation(100.0, 0.0, 0.0), K, K);
  EXPECT_EQ(out.mask.count(), 0u);
  for (double v : out.image.data) EXPECT_EQ(v, 0.0);
}

TEST(Synthesize, RenderedPairMatchesTarget) {
  const PlanarScene scene = default_room(5);
  const Intrinsics K{60.0, 60.0, 39.5, 29.5};
  const auto traj = generate_trajectory({});
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    const auto target = render_frame(scene, traj[i].pose, K, 80, 60);
    const auto source = render_frame(scene, traj[i + 1].pose, K, 80, 60);
    const auto out = synthesize(source.color, target.depth, relative_transform(traj[i].pose, traj[i + 1].pose), K, K);
    ASSERT_GT(out.mask.count(), 0.3 * target.depth.pixel_count());
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < 60; ++y)
      for (int x = 0; x < 80; ++x) {
        if (!out.mask.at(x, y)) continue;
        for (int c = 0; c < 3; ++c, ++n) sum += std::abs(out.image.at(x, y, c) - target.color.at(x, y, c));
      }
    EXPECT_LT(sum / n, 0.02) << "pair " << i;
  }
}
