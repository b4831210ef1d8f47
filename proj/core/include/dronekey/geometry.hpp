#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "dronekey/errors.hpp"

namespace dronekey {

/// Pinhole intrinsics. fx, fy, cx, cy in pixels; no distortion model.
struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d a;
    a << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return a;
  }
  bool invertible() const { return fx != 0.0 && fy != 0.0; }
};

/// Rigid transform into the camera frame: x_cam = R * x_body + t.
struct RigidPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

/// Wraps to [0,1). Exact for integer shifts up to fp rounding of the
/// subtraction; the result 1.0 (possible when x is a tiny negative) maps to 0.
inline double wrap01(double x) {
  double w = x - std::floor(x);
  if (w >= 1.0) w = 0.0;
  return w;
}

/// Back-projects a pixel to a unit-norm bearing ray (z > 0 in front of the
/// camera). Throws ConfigError when the intrinsic matrix is singular.
Eigen::Vector3d pixel_to_ray(const CameraIntrinsics& k, const Eigen::Vector2d& p);

/// Pinhole projection of a camera-frame point. Throws BehindCameraError for
/// z <= 0.
Eigen::Vector2d project_point(const CameraIntrinsics& k, const Eigen::Vector3d& x);

/// Normalized Euler triple -> rotation matrix. Each component is a fraction
/// of a full turn; components are wrapped to [0,1) before use so r and
/// r + any integer produce the same matrix. Composition is intrinsic Z-Y-X:
/// R = Rz(2*pi*r0) * Ry(2*pi*r1) * Rx(2*pi*r2).
Eigen::Matrix3d euler_norm_to_matrix(const Eigen::Vector3d& r);

/// Inverse of euler_norm_to_matrix, canonicalized to [0,1)^3. At gimbal lock
/// (|cos of the middle angle| ~ 0) the third angle is set to 0 and the first
/// absorbs the remaining rotation.
Eigen::Vector3d matrix_to_euler_norm(const Eigen::Matrix3d& m);

/// Normalized angular difference in [0,1]: acos((tr(Rp^T Rg) - 1)/2) / pi,
/// argument clamped to [-1,1] against fp trace overshoot. 1.0 means 180 deg.
double relative_rotation_angle(const Eigen::Matrix3d& rp, const Eigen::Matrix3d& rg);

std::vector<Eigen::Vector3d> transform_points(const RigidPose& pose,
                                              const std::vector<Eigen::Vector3d>& pts_body);

/// Orthonormal within tol and det = +1 within tol.
bool is_rotation_matrix(const Eigen::Matrix3d& m, double tol = 1e-6);

}  // namespace dronekey
