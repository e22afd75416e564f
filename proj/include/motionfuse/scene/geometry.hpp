#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>

#include "motionfuse/core/error.hpp"

namespace mfuse::scene {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// x -> R x + t
struct Rigid {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return R * x + t; }
  Rigid then(const Rigid& next) const { return {next.R * R, next.R * t + next.t}; }
  Rigid inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

  bool is_identity(double tol = 1e-9) const {
    return (R - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol && t.cwiseAbs().maxCoeff() <= tol;
  }
  bool is_proper_rotation(double tol = 1e-6) const {
    return (R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(R.determinant() - 1.0) <= tol;
  }

  // Rotation `rot` about `center` followed by translation `trans`:
  // x -> rot (x - center) + center + trans.
  static Rigid about(const Vec3& center, const Mat3& rot, const Vec3& trans) {
    return {rot, center - rot * center + trans};
  }
  static Rigid translation(const Vec3& trans) { return {Mat3::Identity(), trans}; }
};

inline Mat3 rotation_from_axis_angle(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-15) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, rotvec / angle).toRotationMatrix();
}

inline Vec3 axis_angle_from_rotation(const Mat3& R) {
  const Eigen::AngleAxisd aa(R);
  if (std::abs(aa.angle()) < 1e-15) return Vec3::Zero();
  return aa.axis() * aa.angle();
}

inline Mat3 rotation_from_euler_deg(double yaw, double pitch, double roll) {
  constexpr double k = 3.14159265358979323846 / 180.0;
  return (Eigen::AngleAxisd(yaw * k, Vec3::UnitY()) * Eigen::AngleAxisd(pitch * k, Vec3::UnitX()) *
          Eigen::AngleAxisd(roll * k, Vec3::UnitZ()))
      .toRotationMatrix();
}

// Pinhole camera; frame 1 is the world frame. pose_delta places camera 2 in
// it (orientation R, centre t), so a world point x is seen by camera 2 at
// R^T (x - t).
struct CameraModel {
  double focal = 100.0;
  Vec2 principal{47.5, 47.5};
  int height = 96;
  int width = 96;
  Rigid pose_delta;

  static CameraModel centered(int h, int w, double f) {
    CameraModel c;
    c.focal = f;
    c.height = h;
    c.width = w;
    c.principal = {(w - 1) / 2.0, (h - 1) / 2.0};
    return c;
  }

  void validate() const {
    check(focal > 0, ErrorCode::kInvalidSpec, "camera: focal must be > 0, got ", focal);
    check(height >= 32 && width >= 32, ErrorCode::kInvalidSpec, "camera: image ", height, "x",
          width, " below 32x32");
    check(pose_delta.is_proper_rotation(), ErrorCode::kInvalidSpec,
          "camera: pose rotation is not orthonormal with det +1");
  }

  // Unit-depth ray through pixel (x, y) in camera coordinates.
  Vec3 ray(double x, double y) const {
    return {(x - principal.x()) / focal, (y - principal.y()) / focal, 1.0};
  }
  Vec2 project(const Vec3& cam) const {
    return {focal * cam.x() / cam.z() + principal.x(), focal * cam.y() / cam.z() + principal.y()};
  }
  Vec3 world_to_cam2(const Vec3& x) const {
    return pose_delta.R.transpose() * (x - pose_delta.t);
  }
};

}  // namespace mfuse::scene
