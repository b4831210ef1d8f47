#include "dronekey/pnp.hpp"

#include <cmath>
#include <limits>

namespace dronekey {

namespace {

Eigen::Matrix<double, 2, 4> observed(const PnPProblem& p) {
  Eigen::Matrix<double, 2, 4> obs;
  for (int i = 0; i < 4; ++i) obs.col(i) = p.points_2d[i];
  return obs;
}

double cost_of(const PnPProblem& p, const RigidPose& pose) {
  double acc = 0;
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d x = pose.rotation * p.points_3d_body[i] + pose.translation;
    if (x.z() <= 1e-9) return std::numeric_limits<double>::infinity();
    const Eigen::Vector2d proj(p.intrinsics.fx * x.x() / x.z() + p.intrinsics.cx,
                               p.intrinsics.fy * x.y() / x.z() + p.intrinsics.cy);
    acc += (proj - p.points_2d[i]).squaredNorm();
  }
  return acc / 8.0;
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

struct RefineResult {
  RigidPose pose;
  double cost = std::numeric_limits<double>::infinity();
  bool converged = false;
};

RefineResult refine(const PnPProblem& p, RigidPose pose) {
  constexpr int kMaxIters = 100;
  constexpr double kStepTol = 1e-10;
  double lambda = 1e-3;
  double cost = cost_of(p, pose);
  RefineResult result{pose, cost, false};

  for (int it = 0; it < kMaxIters; ++it) {
    Eigen::Matrix<double, 8, 6> jac;
    Eigen::Matrix<double, 8, 1> res;
    for (int i = 0; i < 4; ++i) {
      const Eigen::Vector3d y = pose.rotation * p.points_3d_body[i];
      const Eigen::Vector3d x = y + pose.translation;
      const double z = x.z();
      res(2 * i) = p.intrinsics.fx * x.x() / z + p.intrinsics.cx - p.points_2d[i].x();
      res(2 * i + 1) = p.intrinsics.fy * x.y() / z + p.intrinsics.cy - p.points_2d[i].y();
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << p.intrinsics.fx / z, 0, -p.intrinsics.fx * x.x() / (z * z), 0,
          p.intrinsics.fy / z, -p.intrinsics.fy * x.y() / (z * z);
      Eigen::Matrix3d skew;
      skew << 0, -y.z(), y.y(), y.z(), 0, -y.x(), -y.y(), y.x(), 0;
      jac.block<2, 3>(2 * i, 0) = -dproj * skew;  // left so(3) perturbation
      jac.block<2, 3>(2 * i, 3) = dproj;
    }
    const Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 6, 1> jtr = jac.transpose() * res;

    bool accepted = false;
    Eigen::Matrix<double, 6, 1> step = Eigen::Matrix<double, 6, 1>::Zero();
    for (int attempt = 0; attempt < 20; ++attempt) {
      const Eigen::Matrix<double, 6, 6> damped =
          jtj + lambda * Eigen::Matrix<double, 6, 6>::Identity();
      step = damped.ldlt().solve(-jtr);
      RigidPose trial = pose;
      const double angle = step.head<3>().norm();
      if (angle > 0)
        trial.rotation =
            Eigen::AngleAxisd(angle, step.head<3>() / angle).toRotationMatrix() * pose.rotation;
      trial.translation += step.tail<3>();
      const double trial_cost = cost_of(p, trial);
      if (trial_cost < cost) {
        pose = trial;
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }
    if (cost < result.cost) result = {pose, cost, false};
    if (accepted && step.norm() < kStepTol) {
      result = {pose, cost, true};
      return result;
    }
    if (!accepted && lambda > 1e14) break;  // stalled; no step improves
  }
  // A stalled iterate at an exact optimum still counts as converged: the
  // accepted-step norm criterion can never fire when no step is accepted.
  if (result.cost < 1e-18) result.converged = true;
  return result;
}

}  // namespace

double reprojection_mse(const PnPProblem& problem, const RigidPose& pose) {
  return cost_of(problem, pose);
}

RigidPose pnp_solve(const PnPProblem& problem) {
  if (!problem.intrinsics.invertible()) throw ConfigError("intrinsics are singular");

  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : problem.points_3d_body) centroid += p;
  centroid /= 4.0;
  Eigen::Matrix<double, 3, 4> centered;
  for (int i = 0; i < 4; ++i) centered.col(i) = problem.points_3d_body[i] - centroid;

  Eigen::JacobiSVD<Eigen::Matrix<double, 3, 4>> svd(centered,
                                                    Eigen::ComputeFullU | Eigen::ComputeThinV);
  const auto& sing = svd.singularValues();
  if (sing(0) <= 0 || sing(1) <= 1e-10 * sing(0))
    throw DegeneracyError("layout points are collinear");

  Eigen::Matrix3d basis = svd.matrixU();
  if (basis.determinant() < 0) basis.col(2) = -basis.col(2);

  // Plane coordinates of the layout and normalized image coordinates.
  Eigen::Matrix<double, 2, 4> plane, norm_img;
  for (int i = 0; i < 4; ++i) {
    plane(0, i) = basis.col(0).dot(centered.col(i));
    plane(1, i) = basis.col(1).dot(centered.col(i));
    norm_img(0, i) = (problem.points_2d[i].x() - problem.intrinsics.cx) / problem.intrinsics.fx;
    norm_img(1, i) = (problem.points_2d[i].y() - problem.intrinsics.cy) / problem.intrinsics.fy;
  }

  // DLT for the homography plane -> normalized image.
  Eigen::Matrix<double, 8, 9> a = Eigen::Matrix<double, 8, 9>::Zero();
  for (int i = 0; i < 4; ++i) {
    const double u = plane(0, i), v = plane(1, i);
    const double x = norm_img(0, i), y = norm_img(1, i);
    a.row(2 * i) << u, v, 1, 0, 0, 0, -x * u, -x * v, -x;
    a.row(2 * i + 1) << 0, 0, 0, u, v, 1, -y * u, -y * v, -y;
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 8, 9>> hsvd(a, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> h = hsvd.matrixV().col(8);
  Eigen::Matrix3d hom;
  hom << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

  std::vector<RigidPose> candidates;
  for (const double sign : {1.0, -1.0}) {
    const Eigen::Matrix3d hs = sign * hom;
    const Eigen::Vector3d b1 = hs.col(0), b2 = hs.col(1), b3 = hs.col(2);
    const double scale = 2.0 / (b1.norm() + b2.norm());
    Eigen::Matrix3d frame;
    frame.col(0) = scale * b1;
    frame.col(1) = scale * b2;
    frame.col(2) = frame.col(0).cross(frame.col(1));
    const Eigen::Matrix3d r_plane = orthonormalize(frame);
    const Eigen::Vector3d t_plane = scale * b3;
    RigidPose pose;
    pose.rotation = r_plane * basis.transpose();
    pose.translation = t_plane - pose.rotation * centroid;
    candidates.push_back(pose);
  }

  // Positive depth culls the planar two-fold ambiguity; if neither candidate
  // passes (degraded input), refine both and let the residual decide.
  std::vector<RigidPose> viable;
  for (const auto& c : candidates) {
    bool in_front = true;
    for (const auto& p : problem.points_3d_body)
      if ((c.rotation * p + c.translation).z() <= 0) in_front = false;
    if (in_front) viable.push_back(c);
  }
  if (viable.empty()) viable = candidates;

  // Frontal fallback scaled by the layout-to-ray spread ratio. Noise on a
  // small target can push both homography sheets behind the camera; this
  // start always has positive depth, so refinement never begins at an
  // infinite cost.
  {
    const Eigen::Vector2d mean_img = norm_img.rowwise().mean();
    double spread_plane = 0, spread_img = 0;
    for (int i = 0; i < 4; ++i) {
      spread_plane += centered.col(i).norm();
      spread_img += (norm_img.col(i) - mean_img).norm();
    }
    if (spread_img > 1e-12) {
      const double z0 = spread_plane / spread_img;
      RigidPose pose;
      pose.rotation = Eigen::Matrix3d::Identity();
      pose.translation = Eigen::Vector3d(mean_img.x() * z0, mean_img.y() * z0, z0) - centroid;
      viable.push_back(pose);
    }
  }

  RefineResult best;
  bool have_best = false;
  bool any_converged = false;
  for (const auto& c : viable) {
    const RefineResult r = refine(problem, c);
    if (!have_best || r.cost < best.cost) {
      best = r;
      have_best = true;
    }
    any_converged = any_converged || r.converged;
  }
  if (!any_converged)
    throw ConvergenceError("PnP refinement did not converge within 100 iterations", best.pose,
                           best.cost);
  return best.pose;
}

}  // namespace dronekey
