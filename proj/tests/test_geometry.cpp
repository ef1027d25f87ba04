#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "evdepth/calibration.hpp"
#include "evdepth/geometry.hpp"
#include "evdepth/trajectory.hpp"
#include "oracles.hpp"

using namespace evdepth;

namespace {

RectifiedCamera camera(double f = 200.0, double cu = 120.0, double cv = 90.0) {
  RectifiedCamera cam;
  cam.fu = cam.fv = f;
  cam.cu = cu;
  cam.cv = cv;
  cam.width = 240;
  cam.height = 180;
  return cam;
}

}  // namespace

TEST(BackProject, KnownPoint) {
  const Vec3 p = back_project(Vec2(160.0, 90.0), 0.5, camera());
  EXPECT_DOUBLE_EQ(p.x(), 0.4);
  EXPECT_DOUBLE_EQ(p.y(), 0.0);
  EXPECT_DOUBLE_EQ(p.z(), 2.0);
}

TEST(BackProject, RejectsNonPositiveInverseDepth) {
  try {
    back_project(Vec2(10, 10), 0.0, camera());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidInverseDepth);
  }
  EXPECT_THROW(back_project(Vec2(10, 10), -1.0, camera()), Error);
}

TEST(BackProject, RejectsOffsetCamera) {
  RectifiedCamera cam = camera();
  cam.tx = -30.0;
  EXPECT_THROW(back_project(Vec2(10, 10), 1.0, cam), Error);
}

TEST(Project, BehindCameraThrows) {
  try {
    project(camera(), Vec3(0, 0, -1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBehindCamera);
  }
}

TEST(Project, RoundTripRandom) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 240), v(0, 180), rho(0.05, 5.0);
  for (int i = 0; i < 2000; ++i) {
    const RectifiedCamera cam = oracle::random_camera(rng);
    const Vec2 x(u(rng), v(rng));
    const Vec2 y = project(cam, back_project(x, rho(rng), cam));
    EXPECT_LT((x - y).norm(), 1e-9);
  }
}

TEST(Warp, IdentityTransformIsIdentity) {
  const auto cam = camera();
  const auto c = warp_coefficients(Vec2(33.5, 71.25), SE3(), cam, cam);
  for (double rho : {0.1, 1.0, 3.0}) EXPECT_LT((warp(c, rho) - Vec2(33.5, 71.25)).norm(), 1e-12);
}

TEST(Warp, PureBaselineGivesDisparity) {
  // Right camera displaced by +b along x: disparity f b rho.
  const auto cam = camera();
  const auto c = warp_coefficients(Vec2(150, 40), SE3::pure_translation(Vec3(-0.1, 0, 0)), cam, cam);
  const Vec2 x = warp(c, 0.5);
  EXPECT_NEAR(x.x(), 150 - 200 * 0.1 * 0.5, 1e-12);
  EXPECT_NEAR(x.y(), 40, 1e-12);
}

TEST(Warp, MatchesMatrixPath) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 240), v(0, 180), rho(0.2, 2.0);
  for (int i = 0; i < 2000; ++i) {
    const RectifiedCamera ref = oracle::random_camera(rng);
    RectifiedCamera target = oracle::random_camera(rng);
    target.tx = std::uniform_real_distribution<double>(-40, 0)(rng);
    const SE3 T = oracle::random_pose(rng, 0.2, 0.3);
    const Vec2 x(u(rng), v(rng));
    const double r = rho(rng);
    const auto c = warp_coefficients(x, T, target, ref);
    const auto w = try_warp(c, r);
    if (!w) continue;
    EXPECT_LT((*w - oracle::warp_by_matrices(x, r, T, target, ref)).norm(), 1e-9);
  }
}

TEST(Warp, DerivativeMatchesFiniteDifference) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 240), v(0, 180), rho(0.2, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const RectifiedCamera cam = oracle::random_camera(rng);
    const SE3 T = oracle::random_pose(rng, 0.2, 0.3);
    const auto c = warp_coefficients(Vec2(u(rng), v(rng)), T, cam, cam);
    const double r = rho(rng);
    if (!(c.denominator(r) > 0.1)) continue;
    const Vec2 d = warp_derivative(c, r);
    const double h = 1e-5 * r;
    for (int k = 0; k < 2; ++k) {
      const double fd = oracle::central_difference([&](double s) { return warp(c, s)[k]; }, r, h);
      EXPECT_NEAR(d[k], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(Warp, DegenerateDenominator) {
  WarpCoefficients c;
  c.C = 1.0;
  c.D = -1.0;
  try {
    warp(c, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateWarp);
  }
  EXPECT_FALSE(try_warp(c, 1.0));
  EXPECT_FALSE(try_warp(c, 2.0));
  try {
    warp(c, 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBehindCamera);
  }
}

TEST(SE3, InverseAndComposition) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const SE3 a = oracle::random_pose(rng, 1.0, 2.0), b = oracle::random_pose(rng, 1.0, 2.0);
    EXPECT_TRUE((a * a.inverse()).is_approx(SE3(), 1e-12));
    const Vec3 p(0.3, -0.2, 1.7);
    EXPECT_LT(((a * b) * p - a * (b * p)).norm(), 1e-12);
  }
}

TEST(SE3, CheckedRejectsNonRotation) {
  Mat3 R = Mat3::Identity();
  R(0, 0) = 1.1;
  EXPECT_THROW(SE3::checked(R, Vec3::Zero()), Error);
  EXPECT_NO_THROW(SE3::checked(Mat3::Identity(), Vec3::Zero()));
}

TEST(RectifiedCamera, ProjectionRoundTrip) {
  Mat34 P;
  P << 210, 0, 118, -31.5, 0, 205, 92, 0, 0, 0, 1, 0;
  const auto cam = RectifiedCamera::from_projection(P, 240, 180);
  EXPECT_EQ(cam.tx, -31.5);
  EXPECT_FALSE(cam.has_zero_fourth_column());
  EXPECT_TRUE(cam.projection().isApprox(P));
}

TEST(RectifiedCamera, RejectsSkewedProjection) {
  Mat34 P;
  P << 210, 3, 118, 0, 0, 205, 92, 0, 0, 0, 1, 0;
  EXPECT_THROW(RectifiedCamera::from_projection(P, 240, 180), Error);
}

TEST(Trajectory, SlerpHalfway) {
  const double quarter = std::numbers::pi / 2;
  const SE3 a = SE3(Mat3::Identity(), Vec3(0, 0, 0));
  const SE3 b = SE3(Eigen::AngleAxisd(quarter, Vec3::UnitZ()).toRotationMatrix(), Vec3(2, 0, 0));
  const Trajectory traj({{0, a}, {1000, b}});
  const SE3 mid = traj.pose_at(500);
  const Eigen::AngleAxisd aa(mid.rotation());
  EXPECT_NEAR(aa.angle(), std::numbers::pi / 4, 1e-12);
  EXPECT_NEAR(mid.translation().x(), 1.0, 1e-12);
  EXPECT_TRUE(traj.pose_at(1000).is_approx(b, 1e-12));
}

TEST(Trajectory, OutsideCoverageThrows) {
  const Trajectory traj({{100, SE3()}, {200, SE3()}});
  try {
    traj.pose_at(201);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfRange);
  }
  EXPECT_THROW(traj.pose_at(99), Error);
}

TEST(Trajectory, RequiresIncreasingTimestamps) {
  EXPECT_THROW(Trajectory({{100, SE3()}, {100, SE3()}}), Error);
}

TEST(Trajectory, FileRoundTrip) {
  const auto dir = oracle::temp_dir("poses");
  std::mt19937_64 rng(9);
  std::vector<PoseSample> samples;
  for (int i = 0; i < 5; ++i) samples.push_back({i * 10'000, oracle::random_pose(rng, 1.0, 2.0)});
  write_poses(dir / "poses.txt", samples);
  const Trajectory loaded = load_poses(dir / "poses.txt");
  ASSERT_EQ(loaded.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(loaded.samples()[i].t, samples[i].t);
    EXPECT_TRUE(loaded.samples()[i].pose.is_approx(samples[i].pose, 1e-12));
  }
}

TEST(Trajectory, RejectsNonUnitQuaternion) {
  const auto dir = oracle::temp_dir("badposes");
  std::ofstream(dir / "p.txt") << "0.0 0 0 0 0 0 0 2\n";
  try {
    load_poses(dir / "p.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
}

TEST(Calibration, RoundTrip) {
  const auto dir = oracle::temp_dir("calib");
  Calibration calib;
  calib.rig.left = camera();
  calib.rig.right = camera(200.0, 121.0, 90.0);
  calib.rig.left_to_right = SE3(Eigen::AngleAxisd(0.01, Vec3::UnitY()).toRotationMatrix(), Vec3(-0.12, 0.001, 0));
  write_calibration(dir / "calib.txt", calib);
  const Calibration loaded = load_calibration(dir / "calib.txt");
  EXPECT_EQ(loaded.rig.width(), 240);
  EXPECT_EQ(loaded.rig.right.cu, 121.0);
  EXPECT_TRUE(loaded.rig.left_to_right.is_approx(calib.rig.left_to_right, 1e-12));
  EXPECT_FALSE(loaded.rectmap_left);
}

TEST(Calibration, RelativeRectmapPaths) {
  const auto dir = oracle::temp_dir("calib_rect");
  std::ofstream(dir / "calib.txt") << "resolution 4 3\n"
                                      "P_left 100 0 2 0 0 100 1.5 0 0 0 1 0\n"
                                      "P_right 100 0 2 -10 0 100 1.5 0 0 0 1 0\n"
                                      "T_E 1 0 0 0 0 1 0 0 0 0 1 0\n"
                                      "rectmap_left maps/left.txt\n";
  const auto calib = load_calibration(dir / "calib.txt");
  ASSERT_TRUE(calib.rectmap_left);
  EXPECT_EQ(*calib.rectmap_left, dir / "maps/left.txt");
  EXPECT_FALSE(calib.rectmap_right);
}

TEST(Calibration, Errors) {
  const auto dir = oracle::temp_dir("calib_err");
  try {
    load_calibration(dir / "missing.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
  std::ofstream(dir / "short.txt") << "resolution 4 3\nP_left 1 2 3\n";
  EXPECT_THROW(load_calibration(dir / "short.txt"), Error);
  std::ofstream(dir / "offset.txt") << "resolution 4 3\n"
                                       "P_left 100 0 2 -5 0 100 1.5 0 0 0 1 0\n"
                                       "P_right 100 0 2 0 0 100 1.5 0 0 0 1 0\n"
                                       "T_E 1 0 0 0 0 1 0 0 0 0 1 0\n";
  EXPECT_THROW(load_calibration(dir / "offset.txt"), Error);
  auto code = [](const std::filesystem::path& p) {
    try {
      load_calibration(p);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;
  };
  EXPECT_EQ(code(dir / "short.txt"), ErrorCode::kParse);
  EXPECT_EQ(code(dir / "offset.txt"), ErrorCode::kParse);
  std::ofstream(dir / "skew.txt") << "resolution 4 3\n"
                                     "P_left 100 2 2 0 0 100 1.5 0 0 0 1 0\n"
                                     "P_right 100 0 2 0 0 100 1.5 0 0 0 1 0\n"
                                     "T_E 1 0 0 0 0 1 0 0 0 0 1 0\n";
  EXPECT_EQ(code(dir / "skew.txt"), ErrorCode::kParse);
  std::ofstream(dir / "rot.txt") << "resolution 4 3\n"
                                    "P_left 100 0 2 0 0 100 1.5 0 0 0 1 0\n"
                                    "P_right 100 0 2 0 0 100 1.5 0 0 0 1 0\n"
                                    "T_E 2 0 0 0 0 1 0 0 0 0 1 0\n";
  EXPECT_EQ(code(dir / "rot.txt"), ErrorCode::kParse);
}
