#pragma once

#include <cmath>
#include <optional>
#include <sstream>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "evdepth/error.hpp"

namespace evdepth {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

inline constexpr double kDegenerateWarpThreshold = 1e-12;

// Rigid-body transform p' = R p + t.
class SE3 {
 public:
  SE3() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  SE3(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  // Same as the constructor but rejects non-rotation matrices.
  static SE3 checked(const Mat3& rotation, const Vec3& translation, double tol = 1e-9) {
    SE3 T(rotation, translation);
    if (!T.has_valid_rotation(tol)) {
      throw Error(ErrorCode::kInvalidArgument, "rotation is not orthonormal with det +1");
    }
    return T;
  }

  static SE3 from_quaternion(const Eigen::Quaterniond& q, const Vec3& translation) {
    return SE3(q.normalized().toRotationMatrix(), translation);
  }

  static SE3 pure_translation(const Vec3& t) { return SE3(Mat3::Identity(), t); }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation_).normalized(); }

  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }

  SE3 operator*(const SE3& other) const {
    return SE3(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
  }

  SE3 inverse() const {
    Mat3 rt = rotation_.transpose();
    return SE3(rt, -(rt * translation_));
  }

  bool has_valid_rotation(double tol = 1e-9) const {
    if (!rotation_.allFinite() || !translation_.allFinite()) return false;
    const double ortho = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation_.determinant() - 1.0) <= tol;
  }

  bool is_approx(const SE3& other, double tol) const {
    return (rotation_ - other.rotation_).cwiseAbs().maxCoeff() <= tol &&
           (translation_ - other.translation_).cwiseAbs().maxCoeff() <= tol;
  }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

// Skew-free rectified pinhole camera. The projection matrix has the form
//   [ fu  0  cu  tx ]
//   [ 0  fv  cv  ty ]
//   [ 0   0   1   0 ]
// where (tx, ty) is the optional fourth column (zero for the left camera).
struct RectifiedCamera {
  double fu = 1.0;  // p11
  double fv = 1.0;  // p22
  double cu = 0.0;  // p13
  double cv = 0.0;  // p23
  double tx = 0.0;  // p14
  double ty = 0.0;  // p24
  int width = 0;
  int height = 0;

  static RectifiedCamera from_projection(const Mat34& P, int width, int height) {
    constexpr double kTol = 1e-12;
    const bool skew_free = std::abs(P(0, 1)) <= kTol && std::abs(P(1, 0)) <= kTol;
    const bool row3 = std::abs(P(2, 0)) <= kTol && std::abs(P(2, 1)) <= kTol &&
                      std::abs(P(2, 2) - 1.0) <= kTol && std::abs(P(2, 3)) <= kTol;
    if (!skew_free || !row3) {
      std::ostringstream msg;
      msg << "projection matrix is not a rectified pinhole form:\n" << P;
      throw Error(ErrorCode::kInvalidArgument, msg.str());
    }
    if (P(0, 0) <= 0.0 || P(1, 1) <= 0.0 || width <= 0 || height <= 0) {
      throw Error(ErrorCode::kInvalidArgument, "focal lengths and image size must be positive");
    }
    return RectifiedCamera{P(0, 0), P(1, 1), P(0, 2), P(1, 2), P(0, 3), P(1, 3), width, height};
  }

  Mat34 projection() const {
    Mat34 P;
    P << fu, 0.0, cu, tx,  //
        0.0, fv, cv, ty,   //
        0.0, 0.0, 1.0, 0.0;
    return P;
  }

  bool has_zero_fourth_column() const { return tx == 0.0 && ty == 0.0; }

  bool contains(const Vec2& x) const {
    return x.x() >= 0.0 && x.y() >= 0.0 && x.x() < width && x.y() < height;
  }
};

// Inverse of the pinhole projection for the reference (left) camera. The
// homogeneous coordinate 1 of the 4-vector form is implicit.
inline Vec3 back_project(const Vec2& x, double rho, const RectifiedCamera& cam) {
  if (!(rho > 0.0) || !std::isfinite(rho)) {
    throw Error(ErrorCode::kInvalidInverseDepth, "inverse depth must be positive and finite");
  }
  if (!cam.has_zero_fourth_column()) {
    throw Error(ErrorCode::kInvalidArgument, "back_project needs a camera with zero fourth column");
  }
  return Vec3((x.x() - cam.cu) / (cam.fu * rho), (x.y() - cam.cv) / (cam.fv * rho), 1.0 / rho);
}

inline Vec2 project(const RectifiedCamera& cam, const Vec3& p) {
  if (!(p.z() > 0.0)) {
    throw Error(ErrorCode::kBehindCamera, "point is not in front of the camera");
  }
  return Vec2((cam.fu * p.x() + cam.cu * p.z() + cam.tx) / p.z(),
              (cam.fv * p.y() + cam.cv * p.z() + cam.ty) / p.z());
}

// u(rho) = (A + B rho) / (C + D rho), v(rho) = (A' + B' rho) / (C + D rho).
struct WarpCoefficients {
  double A = 0.0;
  double B = 0.0;
  double C = 1.0;
  double D = 0.0;
  double A_prime = 0.0;
  double B_prime = 0.0;

  double denominator(double rho) const { return C + D * rho; }
};

// Coefficients of the rational warp taking reference pixel x at inverse depth
// rho through T into the target camera.
inline WarpCoefficients warp_coefficients(const Vec2& x, const SE3& T, const RectifiedCamera& target,
                                          const RectifiedCamera& reference) {
  const Mat3& R = T.rotation();
  const Vec3& t = T.translation();
  const double bu = (x.x() - reference.cu) / reference.fu;
  const double bv = (x.y() - reference.cv) / reference.fv;

  WarpCoefficients c;
  c.A = (target.fu * R(0, 0) + target.cu * R(2, 0)) * bu +
        (target.fu * R(0, 1) + target.cu * R(2, 1)) * bv +
        (target.fu * R(0, 2) + target.cu * R(2, 2));
  c.B = target.fu * t.x() + target.cu * t.z() + target.tx;
  c.C = R(2, 0) * bu + R(2, 1) * bv + R(2, 2);
  c.D = t.z();
  c.A_prime = (target.fv * R(1, 0) + target.cv * R(2, 0)) * bu +
              (target.fv * R(1, 1) + target.cv * R(2, 1)) * bv +
              (target.fv * R(1, 2) + target.cv * R(2, 2));
  c.B_prime = target.fv * t.y() + target.cv * t.z() + target.ty;
  return c;
}

// Non-throwing warp for inner loops; empty when the point is at or behind
// the target camera plane.
inline std::optional<Vec2> try_warp(const WarpCoefficients& c, double rho) {
  const double den = c.denominator(rho);
  if (!(den > kDegenerateWarpThreshold)) return std::nullopt;
  return Vec2((c.A + c.B * rho) / den, (c.A_prime + c.B_prime * rho) / den);
}

inline Vec2 warp(const WarpCoefficients& c, double rho) {
  const double den = c.denominator(rho);
  if (std::abs(den) < kDegenerateWarpThreshold) {
    throw Error(ErrorCode::kDegenerateWarp, "warp denominator vanishes");
  }
  if (den < 0.0) {
    throw Error(ErrorCode::kBehindCamera, "warped point is behind the target camera");
  }
  return Vec2((c.A + c.B * rho) / den, (c.A_prime + c.B_prime * rho) / den);
}

// (du/drho, dv/drho).
inline Vec2 warp_derivative(const WarpCoefficients& c, double rho) {
  const double den = c.denominator(rho);
  if (std::abs(den) < kDegenerateWarpThreshold) {
    throw Error(ErrorCode::kDegenerateWarp, "warp denominator vanishes");
  }
  const double den2 = den * den;
  return Vec2((c.B * c.C - c.A * c.D) / den2, (c.B_prime * c.C - c.A_prime * c.D) / den2);
}

}  // namespace evdepth
