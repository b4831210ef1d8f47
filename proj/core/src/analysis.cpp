#include "dronekey/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dronekey {

namespace {

double gray_at(const Image& img, int x, int y) {
  const std::uint8_t* p = img.px(x, y);
  return (static_cast<double>(p[0]) + p[1] + p[2]) / 3.0;
}

}  // namespace

Eigen::VectorXd image_descriptor(const Image& img) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(kDescriptorDim);
  const double n_px = static_cast<double>(img.width) * img.height;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.px(x, y);
      for (int c = 0; c < 3; ++c) d[8 * c + p[c] / 32] += 1.0;
    }
  // Sobel orientation histogram over interior pixels, magnitude-weighted.
  for (int y = 1; y + 1 < img.height; ++y)
    for (int x = 1; x + 1 < img.width; ++x) {
      const double gx = gray_at(img, x + 1, y - 1) + 2 * gray_at(img, x + 1, y) +
                        gray_at(img, x + 1, y + 1) - gray_at(img, x - 1, y - 1) -
                        2 * gray_at(img, x - 1, y) - gray_at(img, x - 1, y + 1);
      const double gy = gray_at(img, x - 1, y + 1) + 2 * gray_at(img, x, y + 1) +
                        gray_at(img, x + 1, y + 1) - gray_at(img, x - 1, y - 1) -
                        2 * gray_at(img, x, y - 1) - gray_at(img, x + 1, y - 1);
      const double mag = std::hypot(gx, gy);
      if (mag <= 0) continue;
      int bin = static_cast<int>((std::atan2(gy, gx) + M_PI) / (2.0 * M_PI) * 8.0);
      if (bin > 7) bin = 7;
      if (bin < 0) bin = 0;
      d[24 + bin] += mag / 255.0;
    }
  return d / n_px;
}

FeatureCloud extract_image_features(const std::vector<Image>& images, const std::string& label) {
  if (images.empty()) throw Error("feature extraction needs at least one image");
  FeatureCloud cloud;
  cloud.features.resize(static_cast<Eigen::Index>(images.size()), kDescriptorDim);
  for (std::size_t i = 0; i < images.size(); ++i) {
    cloud.features.row(static_cast<Eigen::Index>(i)) = image_descriptor(images[i]).transpose();
    cloud.labels.push_back(label);
  }
  return cloud;
}

void append_cloud(FeatureCloud& dst, const FeatureCloud& src) {
  if (dst.features.size() == 0) {
    dst = src;
    return;
  }
  if (dst.features.cols() != src.features.cols())
    throw ShapeError("feature dimensions differ between clouds");
  const Eigen::Index n = dst.features.rows();
  dst.features.conservativeResize(n + src.features.rows(), Eigen::NoChange);
  dst.features.bottomRows(src.features.rows()) = src.features;
  dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
}

Eigen::MatrixXd pca_project_raw(const Eigen::MatrixXd& rows, Eigen::Vector2d* explained) {
  if (rows.rows() < 3) throw Error("PCA needs at least three samples");
  if (rows.cols() < 2) throw DegeneracyError("PCA needs at least two feature dimensions");
  Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(rows.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw DegeneracyError("eigendecomposition failed");
  const auto& evals = solver.eigenvalues();  // ascending
  const double total = evals.sum();
  if (!(total > 0)) throw DegeneracyError("all samples are identical");
  const Eigen::Index last = evals.size() - 1;
  Eigen::MatrixXd basis(rows.cols(), 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(last - c);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (std::abs(v[i]) > 1e-12) {
        if (v[i] < 0) v = -v;
        break;
      }
    }
    basis.col(c) = v;
    if (explained) (*explained)[c] = evals[last - c] / total;
  }
  return centered * basis;
}

PcaResult pca_project(const FeatureCloud& cloud) {
  const Eigen::Index n = cloud.features.rows();
  if (n < 3) throw Error("PCA needs at least three samples");
  if (static_cast<Eigen::Index>(cloud.labels.size()) != n)
    throw ShapeError("label count does not match feature rows");

  const Eigen::RowVectorXd mean = cloud.features.colwise().mean();
  Eigen::MatrixXd centered = cloud.features.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().mean();

  PcaResult result;
  result.labels = cloud.labels;
  std::vector<int> keep;
  for (Eigen::Index j = 0; j < cloud.features.cols(); ++j) {
    // A dimension whose spread is lost in rounding noise is constant for our
    // purposes; standardizing it would amplify noise into fake structure.
    if (std::sqrt(var[j]) <= 1e-12 * (1.0 + std::abs(mean[j])))
      result.dropped_dims.push_back(static_cast<int>(j));
    else
      keep.push_back(static_cast<int>(j));
  }
  if (keep.size() < 2)
    throw DegeneracyError("fewer than two feature dimensions carry variance");

  Eigen::MatrixXd z(n, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k)
    z.col(static_cast<Eigen::Index>(k)) = centered.col(keep[k]) / std::sqrt(var[keep[k]]);
  result.points = pca_project_raw(z, &result.explained_variance);
  return result;
}

void write_projection(const std::string& path, const PcaResult& result) {
  std::ofstream f(path);
  if (!f) throw LoadError("cannot open for writing: " + path);
  char buf[160];
  f << "dronekey-projection 1\n";
  std::snprintf(buf, sizeof(buf), "explained %.6f %.6f\n", result.explained_variance[0],
                result.explained_variance[1]);
  f << buf;
  f << "count " << result.points.rows() << "\n";
  for (Eigen::Index i = 0; i < result.points.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f %.6f ", result.points(i, 0), result.points(i, 1));
    f << buf << result.labels[static_cast<std::size_t>(i)] << "\n";
  }
  if (!f) throw LoadError("write failed: " + path);
}

PcaResult read_projection(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw LoadError("cannot open: " + path);
  int lineno = 0;
  std::string line;
  auto next = [&]() -> std::string& {
    if (!std::getline(f, line)) throw ParseError(lineno + 1, path + ": unexpected end of file");
    ++lineno;
    return line;
  };
  if (next() != "dronekey-projection 1") throw ParseError(lineno, path + ": bad header");
  PcaResult result;
  {
    std::istringstream ss(next());
    std::string key;
    if (!(ss >> key >> result.explained_variance[0] >> result.explained_variance[1]) ||
        key != "explained")
      throw ParseError(lineno, path + ": expected 'explained <e1> <e2>'");
  }
  long count = 0;
  {
    std::istringstream ss(next());
    std::string key;
    if (!(ss >> key >> count) || key != "count" || count < 0)
      throw ParseError(lineno, path + ": expected 'count <n>'");
  }
  result.points.resize(count, 2);
  for (long i = 0; i < count; ++i) {
    std::istringstream ss(next());
    std::string label;
    if (!(ss >> result.points(i, 0) >> result.points(i, 1) >> label))
      throw ParseError(lineno, path + ": expected 'x y label'");
    result.labels.push_back(label);
  }
  return result;
}

}  // namespace dronekey
