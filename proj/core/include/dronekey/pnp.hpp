#pragma once

#include <Eigen/Dense>
#include <array>

#include "dronekey/errors.hpp"
#include "dronekey/geometry.hpp"

namespace dronekey {

/// 4-point pose problem with a known body-frame layout (the size prior the
/// learned decoder does without). Correspondences are index-matched.
struct PnPProblem {
  std::array<Eigen::Vector3d, 4> points_3d_body;
  std::array<Eigen::Vector2d, 4> points_2d;
  CameraIntrinsics intrinsics;
};

/// Thrown when the damped Gauss-Newton refinement exhausts its iteration
/// budget; carries the best iterate so callers can still use it.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, RigidPose best, double residual)
      : Error(what), best_(std::move(best)), residual_(residual) {}
  const RigidPose& best() const { return best_; }
  double residual() const { return residual_; }

 private:
  RigidPose best_;
  double residual_;
};

/// Mean squared reprojection error of a pose over the four correspondences.
double reprojection_mse(const PnPProblem& problem, const RigidPose& pose);

/// Minimizes reprojection error. Initialization: planar homography (DLT over
/// the layout plane), decomposed with both sheet signs; candidates are
/// filtered by positive depth, refined by Levenberg-damped Gauss-Newton
/// (lambda 1e-3, x10 / /10, <= 100 iterations, stop at step norm 1e-10), and
/// the lower-residual pose wins.
/// Throws DegeneracyError for collinear layouts, ConvergenceError when the
/// iteration budget runs out.
RigidPose pnp_solve(const PnPProblem& problem);

}  // namespace dronekey
