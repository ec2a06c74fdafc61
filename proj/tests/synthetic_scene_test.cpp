#include <gtest/gtest.h>

#include <cmath>

#include "dscloc/synthetic_scene.hpp"
#include "support/oracles.hpp"

using namespace dscloc;

namespace {

PlanarScene wall_at(double d) {
  PlanarScene scene;
  scene.channels = 1;
  SinusoidTexture tex;
  tex.channels = {{{0.5, 0.2, 0.1, 0.3}}};
  scene.planes.push_back({{0, 0, d}, {0, 0, -1}, {1, 0, 0}, {0, 1, 0}, tex});
  return scene;
}

const Intrinsics kK{60.0, 60.0, 39.5, 29.5};

}  // namespace

TEST(Render, FrontoParallelPlaneHasUniformDepth) {
  const auto frame = render_frame(wall_at(3.0), Pose<double>{}, kK, 80, 60);
  for (double d : frame.depth.data) EXPECT_NEAR(d, 3.0, 1e-12);
}

TEST(Render, HalfwayCameraSeesHalfDepth) {
  const Pose<double> pose{{0, 0, 0}, {0, 0, 1.5}};
  const auto frame = render_frame(wall_at(3.0), pose, kK, 80, 60);
  EXPECT_NEAR(frame.depth.at(39, 29), 1.5, 1e-12);
  EXPECT_NEAR(frame.depth.at(0, 0), 1.5, 1e-12);
}

TEST(Render, ObliquePlaneMatchesSingleRaySolution) {
  PlanarScene scene = wall_at(5.0);
  const Eigen::Vector3d n = Eigen::Vector3d(0.3, -0.2, -1.0).normalized();
  const Eigen::Vector3d a = n.unitOrthogonal(), b = n.cross(a);
  scene.planes[0].normal = oracle::vec(n);
  scene.planes[0].axis_s = oracle::vec(a);
  scene.planes[0].axis_t = oracle::vec(b);
  const Pose<double> pose{{0.05, -0.1, 0.02}, {0.2, 0.1, -0.3}};
  const auto frame = render_frame(scene, pose, kK, 80, 60);
  const Eigen::Matrix3d R = oracle::rodrigues(pose.attitude);
  const Eigen::Vector3d c = oracle::eig(pose.position), p0(0, 0, 5.0);
  for (auto [x, y] : {std::pair{0, 0}, {79, 0}, {0, 59}, {79, 59}, {40, 17}}) {
    const Eigen::Vector3d ray = oracle::K_matrix(kK).inverse() * Eigen::Vector3d(x, y, 1.0);
    // Camera-frame z of the hit: solve n·(c + z R ray - p0) = 0 for z.
    const double z = n.dot(p0 - c) / n.dot(R * ray);
    EXPECT_NEAR(frame.depth.at(x, y), z, 1e-9);
  }
}

TEST(Render, BackProjectedDepthLiesOnTheScene) {
  const PlanarScene scene = default_room(2);
  const auto traj = generate_trajectory({});
  for (const auto& f : traj) {
    const auto frame = render_frame(scene, f.pose, kK, 80, 60);
    const Eigen::Matrix3d R = oracle::rodrigues(f.pose.attitude);
    for (int y = 0; y < 60; y += 7)
      for (int x = 0; x < 80; x += 9) {
        const auto q = back_project(Pixel{double(x), double(y)}, frame.depth.at(x, y), kK);
        const Eigen::Vector3d X = R * oracle::eig(q) + oracle::eig(f.pose.position);
        double nearest = 1e9;
        for (const auto& plane : scene.planes)
          nearest = std::min(nearest, std::abs(oracle::eig(plane.normal).dot(X - oracle::eig(plane.point))));
        EXPECT_LT(nearest, 1e-6);
      }
  }
}

TEST(Render, ColorsAreInUnitRangeWithRequestedChannels) {
  for (int channels : {1, 3}) {
    const auto frame = render_frame(default_room(3, channels), Pose<double>{}, kK, 80, 60);
    EXPECT_EQ(frame.color.channels, channels);
    for (double v : frame.color.data) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Render, CameraBehindAPlaneIsRejected) {
  EXPECT_THROW(render_frame(wall_at(3.0), Pose<double>{{0, 0, 0}, {0, 0, 4.0}}, kK, 8, 6), std::invalid_argument);
}

TEST(Render, RayMissingEveryPlaneIsRejected) {
  const Pose<double> looking_away{{0.0, M_PI, 0.0}, {0, 0, 0}};
  EXPECT_THROW(render_frame(wall_at(3.0), looking_away, kK, 8, 6), std::runtime_error);
}

TEST(Render, SameSeedSameImage) {
  const auto a = render_frame(default_room(9), Pose<double>{}, kK, 40, 30);
  const auto b = render_frame(default_room(9), Pose<double>{}, kK, 40, 30);
  const auto c = render_frame(default_room(10), Pose<double>{}, kK, 40, 30);
  EXPECT_EQ(a.color.data, b.color.data);
  EXPECT_NE(a.color.data, c.color.data);
}

TEST(Trajectory, LateralThreeFrames) {
  TrajectoryOptions opt;
  opt.pattern = TrajectoryPattern::kLateral;
  opt.n_frames = 3;
  opt.scale = 0.25;
  const auto traj = generate_trajectory(opt);
  ASSERT_EQ(traj.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(traj[i].id, i);
    EXPECT_EQ(oracle::eig(traj[i].pose.position), Eigen::Vector3d(0.25 * i, 0.0, 0.0));
    EXPECT_EQ(oracle::eig(traj[i].pose.attitude), Eigen::Vector3d::Zero());
  }
}

TEST(Trajectory, ArcRelativeRotationEqualsStep) {
  const TrajectoryOptions opt;
  const auto traj = generate_trajectory(opt);
  ASSERT_EQ(traj.size(), 9u);
  const double step_deg = opt.scale / opt.radius * 180.0 / M_PI;
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    const double angle =
        oracle::geodesic_deg(oracle::rodrigues(traj[i].pose.attitude), oracle::rodrigues(traj[i + 1].pose.attitude));
    EXPECT_NEAR(angle, step_deg, 1e-9 * 180.0 / M_PI);
  }
}

TEST(Trajectory, ArcTravelsByScalePerFrame) {
  const TrajectoryOptions opt;
  const auto traj = generate_trajectory(opt);
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    const double chord = (oracle::eig(traj[i + 1].pose.position) - oracle::eig(traj[i].pose.position)).norm();
    EXPECT_NEAR(chord, 2.0 * opt.radius * std::sin(0.5 * opt.scale / opt.radius), 1e-12);
  }
  EXPECT_NEAR((oracle::eig(traj[4].pose.position) - oracle::eig(opt.target)).norm(), 0.0, 1e-12);
}

TEST(Trajectory, OrbitLooksAtTarget) {
  TrajectoryOptions opt;
  opt.pattern = TrajectoryPattern::kOrbit;
  opt.target = {0.0, 0.2, 2.0};
  for (const auto& f : generate_trajectory(opt)) {
    const Eigen::Vector3d forward = oracle::rodrigues(f.pose.attitude).col(2);
    const Eigen::Vector3d to_target = (oracle::eig(opt.target) - oracle::eig(f.pose.position)).normalized();
    EXPECT_NEAR(forward.dot(to_target), 1.0, 1e-12);
  }
}

TEST(Trajectory, RejectsTooFewFrames) {
  TrajectoryOptions opt;
  opt.n_frames = 2;
  EXPECT_THROW(generate_trajectory(opt), std::invalid_argument);
}

TEST(Trajectory, PatternNames) {
  EXPECT_EQ(parse_pattern("arc"), TrajectoryPattern::kArc);
  EXPECT_EQ(parse_pattern("lateral"), TrajectoryPattern::kLateral);
  EXPECT_EQ(parse_pattern("orbit"), TrajectoryPattern::kOrbit);
  EXPECT_THROW(parse_pattern("spiral"), std::invalid_argument);
}

TEST(Trajectory, DefaultArcConsecutiveFramesAreCovisible) {
  const PlanarScene scene = default_room(1);
  const auto traj = generate_trajectory({});
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    const auto depth = render_frame(scene, traj[i].pose, kK, 80, 60).depth;
    EXPECT_GE(covisible_fraction(depth, traj[i].pose, traj[i + 1].pose, kK), 0.3) << i;
    const auto back = render_frame(scene, traj[i + 1].pose, kK, 80, 60).depth;
    EXPECT_GE(covisible_fraction(back, traj[i + 1].pose, traj[i].pose, kK), 0.3) << i;
  }
}
