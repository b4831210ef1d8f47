#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

namespace dronekey {

/// One drone class. The propeller layout lives in the body frame with the
/// centroid at the origin, z = 0 plane, x right, y forward. Keypoint order is
/// fixed: front-left, front-right, rear-left, rear-right.
struct DroneClassSpec {
  int class_id = 0;
  std::string name;
  std::array<Eigen::Vector3d, 4> propeller_layout;
  double body_extent = 0;  // meters, square side of the propeller layout
};

/// Seven classes with strictly increasing body_extent (0.10 m .. 0.40 m).
/// Sizes are configuration defaults chosen so classes are separable by scale;
/// they are not manufacturer dimensions.
std::vector<DroneClassSpec> default_class_specs();

/// Square layout of side `extent` centered at the origin, FL/FR/RL/RR order.
std::array<Eigen::Vector3d, 4> square_layout(double extent);

}  // namespace dronekey
