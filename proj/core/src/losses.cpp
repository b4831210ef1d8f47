#include "dronekey/losses.hpp"

#include <cmath>

#include "dronekey/geometry.hpp"

namespace dronekey {

WeightingStrategy parse_strategy(const std::string& name) {
  if (name == "equal") return WeightingStrategy::kEqual;
  if (name == "tanh") return WeightingStrategy::kTanhWeighted;
  if (name == "smooth") return WeightingStrategy::kSmoothlyShifted;
  if (name == "3d_biased") return WeightingStrategy::k3dBiased;
  throw ConfigError("unknown loss strategy '" + name +
                    "' (expected equal|tanh|smooth|3d_biased)");
}

std::string strategy_name(WeightingStrategy s) {
  switch (s) {
    case WeightingStrategy::kEqual: return "equal";
    case WeightingStrategy::kTanhWeighted: return "tanh";
    case WeightingStrategy::kSmoothlyShifted: return "smooth";
    case WeightingStrategy::k3dBiased: return "3d_biased";
  }
  throw ConfigError("unknown loss strategy enum value");
}

LossWeights strategy_weights(WeightingStrategy s, int epoch, int total_epochs) {
  const double p = total_epochs > 1
                       ? static_cast<double>(epoch) / static_cast<double>(total_epochs - 1)
                       : 1.0;
  switch (s) {
    case WeightingStrategy::kEqual: return {1.0, 1.0};
    case WeightingStrategy::kTanhWeighted: {
      const double w_dec = 0.5 * (1.0 + std::tanh(8.0 * (p - 0.5)));
      return {1.0 - w_dec, w_dec};
    }
    case WeightingStrategy::kSmoothlyShifted: return {1.0 - p, p};
    case WeightingStrategy::k3dBiased: return {1.0, 5.0};
  }
  throw ConfigError("unknown loss strategy enum value");
}

double loss_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw ShapeError("mse shape mismatch: " + std::to_string(pred.rows()) + "x" +
                     std::to_string(pred.cols()) + " vs " + std::to_string(gt.rows()) + "x" +
                     std::to_string(gt.cols()));
  return (pred - gt).array().square().mean();
}

double loss_cls(const Eigen::VectorXd& dist, int label) {
  if (label < 0 || label >= dist.size())
    throw Error("class label " + std::to_string(label) + " out of range [0," +
                std::to_string(dist.size()) + ")");
  return -std::log(std::max(dist[label], 1e-12));
}

double loss_rot_circular(const Eigen::Vector3d& r_pred, const Eigen::Vector3d& r_gt) {
  double total = 0.0;
  for (int j = 0; j < 3; ++j) {
    const double ad = std::abs(wrap01(r_pred[j]) - wrap01(r_gt[j]));
    const double d = std::min(ad, 1.0 - ad);
    total += d * d;
  }
  return total / 3.0;
}

Eigen::Vector3d loss_rot_circular_grad(const Eigen::Vector3d& r_pred,
                                       const Eigen::Vector3d& r_gt) {
  Eigen::Vector3d g;
  for (int j = 0; j < 3; ++j) {
    const double d = wrap01(r_pred[j]) - wrap01(r_gt[j]);
    const double ad = std::abs(d);
    if (ad <= 0.5) {
      g[j] = 2.0 * d / 3.0;
    } else {
      const double sign = d > 0 ? 1.0 : -1.0;
      g[j] = -2.0 * (1.0 - ad) * sign / 3.0;
    }
  }
  return g;
}

LossBreakdown combine_losses(LossBreakdown terms, WeightingStrategy s, int epoch,
                             int total_epochs) {
  terms.l_enc = terms.l_2d + terms.l_cls;
  terms.l_dec = (terms.l_3d + terms.l_rot) + terms.l_trans;
  const LossWeights w = strategy_weights(s, epoch, total_epochs);
  if (s == WeightingStrategy::kEqual) {
    terms.l_total = terms.l_enc + terms.l_dec;
  } else {
    terms.l_total = w.w_enc * terms.l_enc + w.w_dec * terms.l_dec;
  }
  return terms;
}

}  // namespace dronekey
