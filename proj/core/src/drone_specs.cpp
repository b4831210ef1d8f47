#include "dronekey/drone_specs.hpp"

namespace dronekey {

std::array<Eigen::Vector3d, 4> square_layout(double extent) {
  const double h = extent / 2.0;
  return {Eigen::Vector3d(-h, h, 0),   // front-left
          Eigen::Vector3d(h, h, 0),    // front-right
          Eigen::Vector3d(-h, -h, 0),  // rear-left
          Eigen::Vector3d(h, -h, 0)};  // rear-right
}

std::vector<DroneClassSpec> default_class_specs() {
  const char* names[7] = {"Mini3", "Mini2", "Air3", "Air2", "Mav2", "Mav3", "Tello"};
  std::vector<DroneClassSpec> specs;
  specs.reserve(7);
  for (int i = 0; i < 7; ++i) {
    DroneClassSpec s;
    s.class_id = i;
    s.name = names[i];
    s.body_extent = 0.10 + 0.05 * i;
    s.propeller_layout = square_layout(s.body_extent);
    specs.push_back(std::move(s));
  }
  return specs;
}

}  // namespace dronekey
