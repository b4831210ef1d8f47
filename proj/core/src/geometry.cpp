#include "dronekey/geometry.hpp"

namespace dronekey {

Eigen::Vector3d pixel_to_ray(const CameraIntrinsics& k, const Eigen::Vector2d& p) {
  if (!k.invertible()) throw ConfigError("intrinsic matrix is singular (fx or fy is zero)");
  Eigen::Vector3d v((p.x() - k.cx) / k.fx, (p.y() - k.cy) / k.fy, 1.0);
  return v / v.norm();
}

Eigen::Vector2d project_point(const CameraIntrinsics& k, const Eigen::Vector3d& x) {
  if (x.z() <= 0.0) throw BehindCameraError("point has non-positive depth z=" + std::to_string(x.z()));
  return {k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy};
}

Eigen::Matrix3d euler_norm_to_matrix(const Eigen::Vector3d& r) {
  const double az = 2.0 * M_PI * wrap01(r[0]);
  const double ay = 2.0 * M_PI * wrap01(r[1]);
  const double ax = 2.0 * M_PI * wrap01(r[2]);
  Eigen::Matrix3d m;
  m = Eigen::AngleAxisd(az, Eigen::Vector3d::UnitZ()) *
      Eigen::AngleAxisd(ay, Eigen::Vector3d::UnitY()) *
      Eigen::AngleAxisd(ax, Eigen::Vector3d::UnitX());
  return m;
}

Eigen::Vector3d matrix_to_euler_norm(const Eigen::Matrix3d& m) {
  // R = Rz(a) Ry(b) Rx(c): R(2,0) = -sin b, R(1,0)/R(0,0) = tan a,
  // R(2,1)/R(2,2) = tan c.
  const double sb = std::clamp(-m(2, 0), -1.0, 1.0);
  double a, b, c;
  // The lock cutoff must sit between two scales: matrices composed at an
  // exact lock angle carry ~1e-16 of product roundoff in 1 - |sb|, while a
  // matrix folded from distance d loses O(sqrt(d)) in the round trip (3e-5
  // at d = 1e-9). 1e-13 keeps both sides comfortably inside 1e-9.
  if (std::abs(sb) < 1.0 - 1e-13) {
    b = std::asin(sb);
    a = std::atan2(m(1, 0), m(0, 0));
    c = std::atan2(m(2, 1), m(2, 2));
  } else {
    // Gimbal lock: cos b ~ 0, only a -+ c is determined. Convention: c = 0.
    b = (sb > 0) ? M_PI / 2.0 : -M_PI / 2.0;
    a = std::atan2(-m(0, 1), m(1, 1));
    c = 0.0;
  }
  const double two_pi = 2.0 * M_PI;
  return {wrap01(a / two_pi), wrap01(b / two_pi), wrap01(c / two_pi)};
}

double relative_rotation_angle(const Eigen::Matrix3d& rp, const Eigen::Matrix3d& rg) {
  const double tr = (rp.transpose() * rg).trace();
  const double arg = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(arg) / M_PI;
}

std::vector<Eigen::Vector3d> transform_points(const RigidPose& pose,
                                              const std::vector<Eigen::Vector3d>& pts_body) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(pts_body.size());
  for (const auto& p : pts_body) out.push_back(pose.rotation * p + pose.translation);
  return out;
}

bool is_rotation_matrix(const Eigen::Matrix3d& m, double tol) {
  return (m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(m.determinant() - 1.0) <= tol;
}

}  // namespace dronekey
