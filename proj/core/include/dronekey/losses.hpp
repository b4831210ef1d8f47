#pragma once

#include <Eigen/Dense>
#include <string>

#include "dronekey/errors.hpp"

namespace dronekey {

/// Per-step loss terms. l_enc = l_2d + l_cls; l_dec = l_3d + l_rot + l_trans;
/// l_total depends on the weighting strategy (equal strategy: l_enc + l_dec).
struct LossBreakdown {
  double l_2d = 0, l_cls = 0, l_3d = 0, l_rot = 0, l_trans = 0;
  double l_enc = 0, l_dec = 0, l_total = 0;
};

enum class WeightingStrategy { kEqual, kTanhWeighted, kSmoothlyShifted, k3dBiased };

WeightingStrategy parse_strategy(const std::string& name);
std::string strategy_name(WeightingStrategy s);

/// Encoder/decoder mixing weights at a given epoch. Schedules run on training
/// progress p = epoch/(total_epochs-1) in [0,1] (p = 1 when total_epochs = 1).
/// - equal:            w_enc = w_dec = 1
/// - tanh:             w_dec = (1 + tanh(8*(p - 0.5)))/2, w_enc = 1 - w_dec
///                     (steepness 8 puts the weight almost entirely on the
///                     encoder at p=0 and on the decoder at p=1)
/// - smooth:           w_dec = p, w_enc = 1 - p (linear ramp, same endpoints)
/// - 3d_biased:        w_enc = 1, w_dec = 5
struct LossWeights {
  double w_enc = 1.0, w_dec = 1.0;
};
LossWeights strategy_weights(WeightingStrategy s, int epoch, int total_epochs);

/// Mean over all squared coordinate differences. Shapes must match.
double loss_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt);
inline double loss_2d(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt) {
  return loss_mse(pred, gt);
}
inline double loss_3d(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt) {
  return loss_mse(pred, gt);
}
inline double loss_trans(const Eigen::Vector3d& pred, const Eigen::Vector3d& gt) {
  return loss_mse(pred, gt);
}

/// -log(dist[label]) with a 1e-12 floor inside the log.
double loss_cls(const Eigen::VectorXd& dist, int label);

/// Squared shortest circular distance, averaged over the three components:
/// (1/3) * sum_j min(|d_j|, 1-|d_j|)^2 with d_j = wrap(pred_j) - wrap(gt_j).
/// 0 and 1 denote the same angle; inputs may be any reals (wrapped first).
double loss_rot_circular(const Eigen::Vector3d& r_pred, const Eigen::Vector3d& r_gt);

/// d loss_rot_circular / d r_pred. At the non-differentiable ridge
/// |d| = 0.5 the inner (|d| < 0.5) branch is used.
Eigen::Vector3d loss_rot_circular_grad(const Eigen::Vector3d& r_pred,
                                       const Eigen::Vector3d& r_gt);

/// Fills l_enc/l_dec from the atomic terms and l_total from the strategy.
LossBreakdown combine_losses(LossBreakdown terms, WeightingStrategy s, int epoch,
                             int total_epochs);

}  // namespace dronekey
