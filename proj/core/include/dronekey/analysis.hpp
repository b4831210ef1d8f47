#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dronekey/errors.hpp"
#include "dronekey/image.hpp"

namespace dronekey {

/// 8 intensity bins per RGB channel plus 8 Sobel-orientation bins weighted by
/// gradient magnitude, everything divided by the pixel count.
constexpr int kDescriptorDim = 32;

/// Row-per-sample feature matrix with one source label per row.
struct FeatureCloud {
  Eigen::MatrixXd features;  // n x kDescriptorDim (or any uniform dim)
  std::vector<std::string> labels;
};

Eigen::VectorXd image_descriptor(const Image& img);
FeatureCloud extract_image_features(const std::vector<Image>& images, const std::string& label);
void append_cloud(FeatureCloud& dst, const FeatureCloud& src);

struct PcaResult {
  Eigen::MatrixXd points;  // n x 2, rows align with the cloud
  Eigen::Vector2d explained_variance = Eigen::Vector2d::Zero();  // fractions of retained total
  std::vector<int> dropped_dims;  // zero-variance dims removed before standardization
  std::vector<std::string> labels;
};

/// Centers the rows and projects onto the top-2 covariance eigenvectors.
/// Sign convention: the first loading above 1e-12 in magnitude is positive.
/// No standardization; pca_project wraps this after scaling each dimension.
/// Throws DegeneracyError when fewer than two dimensions carry variance.
Eigen::MatrixXd pca_project_raw(const Eigen::MatrixXd& rows,
                                Eigen::Vector2d* explained = nullptr);

/// Standardizes each dimension to zero mean and unit population variance,
/// drops dimensions whose spread is negligible against their magnitude, then
/// projects with pca_project_raw. Needs n >= 3 rows.
PcaResult pca_project(const FeatureCloud& cloud);

/// Projection files: "dronekey-projection 1", "explained <e1> <e2>",
/// "count <n>", then "x y label" per row at six decimals.
void write_projection(const std::string& path, const PcaResult& result);
PcaResult read_projection(const std::string& path);

}  // namespace dronekey
