#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dronekey/errors.hpp"

namespace dronekey {

/// Reverse-mode tape over dynamically sized Eigen matrices.
///
/// The graph topology is built once; per sample the caller overwrites leaf
/// values, runs forward() (re-evaluates every node in creation order), then
/// backward(loss) (zeroes gradients, seeds the scalar loss with 1, replays
/// the tape in reverse). Leaf values and gradients are addressed by node id,
/// so parameter updates and finite-difference probes mutate val() directly.
///
/// Scalar type S is float for training throughput and double for
/// finite-difference gradient verification.
template <typename S>
class Tape {
 public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int size() const { return static_cast<int>(nodes_.size()); }

  Mat& val(int id) { return nodes_[id].val; }
  const Mat& val(int id) const { return nodes_[id].val; }
  Mat& grad(int id) { return nodes_[id].grad; }
  const Mat& grad(int id) const { return nodes_[id].grad; }

  /// Leaf whose value is set externally (input or parameter).
  int leaf(int rows, int cols) {
    return push(Mat::Zero(rows, cols), nullptr, nullptr);
  }

  int constant(const Mat& v) { return push(v, nullptr, nullptr); }

  void forward() {
    for (auto& n : nodes_)
      if (n.fwd) n.fwd();
  }

  void backward(int loss_id) {
    check_scalar(loss_id, "backward");
    for (auto& n : nodes_) n.grad.setZero(n.val.rows(), n.val.cols());
    nodes_[loss_id].grad(0, 0) = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
      if (it->bwd) it->bwd();
  }

  // ---- ops ----

  int matmul(int a, int b) {
    if (val(a).cols() != val(b).rows())
      throw ShapeError("matmul inner dimensions " + shape(a) + " * " + shape(b));
    int out = push(Mat::Zero(val(a).rows(), val(b).cols()));
    set_fwd(out, [this, out, a, b] { val(out).noalias() = val(a) * val(b); });
    set_bwd(out, [this, out, a, b] {
      grad(a).noalias() += grad(out) * val(b).transpose();
      grad(b).noalias() += val(a).transpose() * grad(out);
    });
    return out;
  }

  int add(int a, int b) {
    check_same(a, b, "add");
    int out = push(Mat::Zero(val(a).rows(), val(a).cols()));
    set_fwd(out, [this, out, a, b] { val(out) = val(a) + val(b); });
    set_bwd(out, [this, out, a, b] {
      grad(a) += grad(out);
      grad(b) += grad(out);
    });
    return out;
  }

  int sub(int a, int b) {
    check_same(a, b, "sub");
    int out = push(Mat::Zero(val(a).rows(), val(a).cols()));
    set_fwd(out, [this, out, a, b] { val(out) = val(a) - val(b); });
    set_bwd(out, [this, out, a, b] {
      grad(a) += grad(out);
      grad(b) -= grad(out);
    });
    return out;
  }

  /// Broadcasts a column vector across all columns of a.
  int add_colvec(int a, int v) {
    if (val(v).cols() != 1 || val(v).rows() != val(a).rows())
      throw ShapeError("add_colvec needs a column vector matching " + shape(a));
    int out = push(Mat::Zero(val(a).rows(), val(a).cols()));
    set_fwd(out, [this, out, a, v] { val(out) = val(a).colwise() + val(v).col(0); });
    set_bwd(out, [this, out, a, v] {
      grad(a) += grad(out);
      grad(v).col(0) += grad(out).rowwise().sum();
    });
    return out;
  }

  int scale(int a, S c) {
    int out = push(Mat::Zero(val(a).rows(), val(a).cols()));
    set_fwd(out, [this, out, a, c] { val(out) = val(a) * c; });
    set_bwd(out, [this, out, a, c] { grad(a) += grad(out) * c; });
    return out;
  }

  int relu(int a) {
    int out = push(Mat::Zero(val(a).rows(), val(a).cols()));
    set_fwd(out, [this, out, a] { val(out) = val(a).cwiseMax(S(0)); });
    set_bwd(out, [this, out, a] {
      grad(a).array() += (val(a).array() > S(0)).template cast<S>() * grad(out).array();
    });
    return out;
  }

  int sigmoid(int a) {
    int out = push(Mat::Zero(val(a).rows(), val(a).cols()));
    set_fwd(out, [this, out, a] {
      val(out) = (S(1) / (S(1) + (-val(a).array()).exp())).matrix();
    });
    set_bwd(out, [this, out, a] {
      grad(a).array() += grad(out).array() * val(out).array() * (S(1) - val(out).array());
    });
    return out;
  }

  int transpose(int a) {
    int out = push(Mat::Zero(val(a).cols(), val(a).rows()));
    set_fwd(out, [this, out, a] { val(out) = val(a).transpose(); });
    set_bwd(out, [this, out, a] { grad(a) += grad(out).transpose(); });
    return out;
  }

  /// Softmax along each row (normalizes over columns).
  int softmax_rows(int a) {
    int out = push(Mat::Zero(val(a).rows(), val(a).cols()));
    set_fwd(out, [this, out, a] {
      auto& y = val(out);
      const auto& x = val(a);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const S m = x.row(i).maxCoeff();
        y.row(i) = (x.row(i).array() - m).exp();
        y.row(i) /= y.row(i).sum();
      }
    });
    set_bwd(out, [this, out, a] {
      const auto& y = val(out);
      const auto& g = grad(out);
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const S dot = (g.row(i).array() * y.row(i).array()).sum();
        grad(a).row(i).array() += y.row(i).array() * (g.row(i).array() - dot);
      }
    });
    return out;
  }

  /// Softmax along each column.
  int softmax_cols(int a) {
    int t = transpose(a);
    int s = softmax_rows(t);
    return transpose(s);
  }

  /// Per-column layer normalization with learned per-row scale/shift.
  int layernorm_cols(int a, int gamma, int beta, S eps = S(1e-5)) {
    if (val(gamma).cols() != 1 || val(gamma).rows() != val(a).rows() ||
        val(beta).cols() != 1 || val(beta).rows() != val(a).rows())
      throw ShapeError("layernorm scale/shift must be column vectors matching " + shape(a));
    int out = push(Mat::Zero(val(a).rows(), val(a).cols()));
    auto xhat = std::make_shared<Mat>();
    auto inv_std = std::make_shared<Mat>();
    set_fwd(out, [this, out, a, gamma, beta, eps, xhat, inv_std] {
      const auto& x = val(a);
      const Eigen::Index d = x.rows();
      xhat->resize(d, x.cols());
      inv_std->resize(1, x.cols());
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const S mu = x.col(j).mean();
        const S var = (x.col(j).array() - mu).square().mean();
        const S inv = S(1) / std::sqrt(var + eps);
        (*inv_std)(0, j) = inv;
        xhat->col(j) = (x.col(j).array() - mu) * inv;
        val(out).col(j) =
            (xhat->col(j).array() * val(gamma).col(0).array()) + val(beta).col(0).array();
      }
    });
    set_bwd(out, [this, out, a, gamma, beta, xhat, inv_std] {
      const auto& g = grad(out);
      const Eigen::Index d = g.rows();
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        const auto dxhat = (g.col(j).array() * val(gamma).col(0).array()).eval();
        const S m1 = dxhat.mean();
        const S m2 = (dxhat * xhat->col(j).array()).mean();
        grad(a).col(j).array() +=
            (*inv_std)(0, j) * (dxhat - m1 - xhat->col(j).array() * m2);
        grad(gamma).col(0).array() += g.col(j).array() * xhat->col(j).array();
        grad(beta).col(0) += g.col(j);
      }
      (void)d;
    });
    return out;
  }

  /// Row-wise max over columns -> (rows, 1). Gradient routes to the argmax
  /// column of each row (first maximum on ties).
  int colwise_max(int a) {
    int out = push(Mat::Zero(val(a).rows(), 1));
    auto argmax = std::make_shared<std::vector<Eigen::Index>>();
    set_fwd(out, [this, out, a, argmax] {
      const auto& x = val(a);
      argmax->resize(x.rows());
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::Index j;
        val(out)(i, 0) = x.row(i).maxCoeff(&j);
        (*argmax)[i] = j;
      }
    });
    set_bwd(out, [this, out, a, argmax] {
      for (Eigen::Index i = 0; i < val(a).rows(); ++i)
        grad(a)(i, (*argmax)[i]) += grad(out)(i, 0);
    });
    return out;
  }

  int hstack(int a, int b) {
    if (val(a).rows() != val(b).rows())
      throw ShapeError("hstack row mismatch " + shape(a) + " | " + shape(b));
    int out = push(Mat::Zero(val(a).rows(), val(a).cols() + val(b).cols()));
    set_fwd(out, [this, out, a, b] {
      val(out).leftCols(val(a).cols()) = val(a);
      val(out).rightCols(val(b).cols()) = val(b);
    });
    set_bwd(out, [this, out, a, b] {
      grad(a) += grad(out).leftCols(val(a).cols());
      grad(b) += grad(out).rightCols(val(b).cols());
    });
    return out;
  }

  int vstack(const std::vector<int>& parts) {
    if (parts.empty()) throw ShapeError("vstack of nothing");
    Eigen::Index rows = 0;
    const Eigen::Index cols = val(parts[0]).cols();
    for (int p : parts) {
      if (val(p).cols() != cols) throw ShapeError("vstack column mismatch");
      rows += val(p).rows();
    }
    int out = push(Mat::Zero(rows, cols));
    auto ps = std::make_shared<std::vector<int>>(parts);
    set_fwd(out, [this, out, ps] {
      Eigen::Index r = 0;
      for (int p : *ps) {
        val(out).middleRows(r, val(p).rows()) = val(p);
        r += val(p).rows();
      }
    });
    set_bwd(out, [this, out, ps] {
      Eigen::Index r = 0;
      for (int p : *ps) {
        grad(p) += grad(out).middleRows(r, val(p).rows());
        r += val(p).rows();
      }
    });
    return out;
  }

  int vstack(int a, int b) { return vstack(std::vector<int>{a, b}); }

  int slice_rows(int a, int start, int n) {
    if (start < 0 || start + n > val(a).rows())
      throw ShapeError("slice_rows out of range on " + shape(a));
    int out = push(Mat::Zero(n, val(a).cols()));
    set_fwd(out, [this, out, a, start, n] { val(out) = val(a).middleRows(start, n); });
    set_bwd(out, [this, out, a, start, n] {
      grad(a).middleRows(start, n) += grad(out);
    });
    return out;
  }

  int slice_cols(int a, int start, int n) {
    if (start < 0 || start + n > val(a).cols())
      throw ShapeError("slice_cols out of range on " + shape(a));
    int out = push(Mat::Zero(val(a).rows(), n));
    set_fwd(out, [this, out, a, start, n] { val(out) = val(a).middleCols(start, n); });
    set_bwd(out, [this, out, a, start, n] {
      grad(a).middleCols(start, n) += grad(out);
    });
    return out;
  }

  /// Column-major relayout into (r, c); element count must match.
  int reshape(int a, int r, int c) {
    if (val(a).size() != static_cast<Eigen::Index>(r) * c)
      throw ShapeError("reshape element count mismatch on " + shape(a));
    int out = push(Mat::Zero(r, c));
    set_fwd(out, [this, out, a, r, c] {
      val(out) = Eigen::Map<const Mat>(val(a).data(), r, c);
    });
    set_bwd(out, [this, out, a] {
      grad(a) +=
          Eigen::Map<const Mat>(grad(out).data(), val(a).rows(), val(a).cols());
    });
    return out;
  }

  /// out = sum_l gate(l) * parts[l]; gate is (N, 1), parts share one shape.
  int gated_sum(int gate, const std::vector<int>& parts) {
    if (val(gate).cols() != 1 ||
        val(gate).rows() != static_cast<Eigen::Index>(parts.size()))
      throw ShapeError("gate must be a column of length " + std::to_string(parts.size()));
    for (int p : parts) check_same(parts[0], p, "gated_sum");
    int out = push(Mat::Zero(val(parts[0]).rows(), val(parts[0]).cols()));
    auto ps = std::make_shared<std::vector<int>>(parts);
    set_fwd(out, [this, out, gate, ps] {
      val(out).setZero();
      for (std::size_t l = 0; l < ps->size(); ++l)
        val(out) += val(gate)(static_cast<Eigen::Index>(l), 0) * val((*ps)[l]);
    });
    set_bwd(out, [this, out, gate, ps] {
      for (std::size_t l = 0; l < ps->size(); ++l) {
        const auto li = static_cast<Eigen::Index>(l);
        grad(gate)(li, 0) += (grad(out).array() * val((*ps)[l]).array()).sum();
        grad((*ps)[l]) += val(gate)(li, 0) * grad(out);
      }
    });
    return out;
  }

  /// Keypoints (4, 2) in pixels -> unit bearing rays (3, 4), one per column.
  int pixel_to_rays(int y2d, double fx, double fy, double cx, double cy) {
    if (val(y2d).rows() != 4 || val(y2d).cols() != 2)
      throw ShapeError("pixel_to_rays expects a 4x2 keypoint matrix, got " + shape(y2d));
    int out = push(Mat::Zero(3, 4));
    set_fwd(out, [this, out, y2d, fx, fy, cx, cy] {
      for (int k = 0; k < 4; ++k) {
        Eigen::Matrix<S, 3, 1> u((val(y2d)(k, 0) - S(cx)) / S(fx),
                                 (val(y2d)(k, 1) - S(cy)) / S(fy), S(1));
        val(out).col(k) = u / u.norm();
      }
    });
    set_bwd(out, [this, out, y2d, fx, fy, cx, cy] {
      for (int k = 0; k < 4; ++k) {
        Eigen::Matrix<S, 3, 1> u((val(y2d)(k, 0) - S(cx)) / S(fx),
                                 (val(y2d)(k, 1) - S(cy)) / S(fy), S(1));
        const S nrm = u.norm();
        const Eigen::Matrix<S, 3, 1> v = val(out).col(k);
        // d(unit(u))/du = (I - v v^T) / |u|, symmetric.
        const Eigen::Matrix<S, 3, 1> gu =
            (grad(out).col(k) - v * v.dot(grad(out).col(k))) / nrm;
        grad(y2d)(k, 0) += gu(0) / S(fx);
        grad(y2d)(k, 1) += gu(1) / S(fy);
      }
    });
    return out;
  }

  /// Mean of squared differences over all entries -> scalar.
  int mse(int a, int b) {
    check_same(a, b, "mse");
    int out = push(Mat::Zero(1, 1));
    set_fwd(out, [this, out, a, b] {
      val(out)(0, 0) = (val(a) - val(b)).array().square().mean();
    });
    set_bwd(out, [this, out, a, b] {
      const S c = grad(out)(0, 0) * S(2) / S(val(a).size());
      grad(a) += c * (val(a) - val(b));
      grad(b) -= c * (val(a) - val(b));
    });
    return out;
  }

  /// -log(dist[*label] floored at 1e-12); label is read on every pass so the
  /// same graph serves every sample.
  int cross_entropy(int dist, const int* label) {
    if (val(dist).cols() != 1) throw ShapeError("cross_entropy expects a column distribution");
    int out = push(Mat::Zero(1, 1));
    set_fwd(out, [this, out, dist, label] {
      const S p = std::max(val(dist)(*label, 0), S(1e-12));
      val(out)(0, 0) = -std::log(p);
    });
    set_bwd(out, [this, out, dist, label] {
      const S p = val(dist)(*label, 0);
      if (p > S(1e-12)) grad(dist)(*label, 0) -= grad(out)(0, 0) / p;
    });
    return out;
  }

  /// Mean squared shortest circular distance between two (3, 1) angle
  /// triples in turns. Inputs are wrapped to [0,1); at the |d| = 0.5 ridge
  /// the inner branch gradient is used.
  int circular_loss(int pred, int gt) {
    check_same(pred, gt, "circular_loss");
    if (val(pred).rows() != 3 || val(pred).cols() != 1)
      throw ShapeError("circular_loss expects 3x1 inputs");
    auto wrap = [](S x) {
      S w = x - std::floor(x);
      if (w >= S(1)) w = S(0);
      return w;
    };
    int out = push(Mat::Zero(1, 1));
    set_fwd(out, [this, out, pred, gt, wrap] {
      S total = S(0);
      for (int j = 0; j < 3; ++j) {
        const S ad = std::abs(wrap(val(pred)(j, 0)) - wrap(val(gt)(j, 0)));
        const S d = std::min(ad, S(1) - ad);
        total += d * d;
      }
      val(out)(0, 0) = total / S(3);
    });
    set_bwd(out, [this, out, pred, gt, wrap] {
      const S g = grad(out)(0, 0);
      for (int j = 0; j < 3; ++j) {
        const S d = wrap(val(pred)(j, 0)) - wrap(val(gt)(j, 0));
        const S ad = std::abs(d);
        S dd;
        if (ad <= S(0.5)) {
          dd = S(2) * d / S(3);
        } else {
          dd = -S(2) * (S(1) - ad) * (d > S(0) ? S(1) : S(-1)) / S(3);
        }
        grad(pred)(j, 0) += g * dd;
        grad(gt)(j, 0) -= g * dd;
      }
    });
    return out;
  }

  /// Weighted sum of scalar nodes; weights are read through the pointer on
  /// every pass (loss schedules update them between epochs).
  int weighted_sum(const std::vector<int>& terms, const S* weights) {
    for (int t : terms) check_scalar(t, "weighted_sum");
    int out = push(Mat::Zero(1, 1));
    auto ts = std::make_shared<std::vector<int>>(terms);
    set_fwd(out, [this, out, ts, weights] {
      S acc = S(0);
      for (std::size_t i = 0; i < ts->size(); ++i) acc += weights[i] * val((*ts)[i])(0, 0);
      val(out)(0, 0) = acc;
    });
    set_bwd(out, [this, out, ts, weights] {
      for (std::size_t i = 0; i < ts->size(); ++i)
        grad((*ts)[i])(0, 0) += weights[i] * grad(out)(0, 0);
    });
    return out;
  }

  /// 3x3/stride-2/pad-1 convolution over a (Cin, H*W) feature map (column
  /// index = y*W + x), producing (Cout, Ho*Wo). Lowered to an im2col matmul;
  /// w is (Cout, Cin*9), b is (Cout, 1).
  int conv3x3s2(int x, int w, int b, int cin, int h, int wdt) {
    const int ho = (h + 1) / 2, wo = (wdt + 1) / 2;
    if (val(x).rows() != cin || val(x).cols() != static_cast<Eigen::Index>(h) * wdt)
      throw ShapeError("conv input shape mismatch: " + shape(x));
    if (val(w).cols() != static_cast<Eigen::Index>(cin) * 9)
      throw ShapeError("conv kernel shape mismatch: " + shape(w));
    const int cout = static_cast<int>(val(w).rows());
    if (val(b).rows() != cout || val(b).cols() != 1)
      throw ShapeError("conv bias shape mismatch: " + shape(b));

    // Source pixel index per (output position, kernel tap); -1 marks padding.
    auto src = std::make_shared<std::vector<int>>();
    src->resize(static_cast<std::size_t>(ho) * wo * 9);
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox)
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = oy * 2 + ky - 1, ix = ox * 2 + kx - 1;
            (*src)[(static_cast<std::size_t>(oy) * wo + ox) * 9 + ky * 3 + kx] =
                (iy >= 0 && iy < h && ix >= 0 && ix < wdt) ? iy * wdt + ix : -1;
          }

    auto u = std::make_shared<Mat>(Mat::Zero(static_cast<Eigen::Index>(cin) * 9,
                                             static_cast<Eigen::Index>(ho) * wo));
    int out = push(Mat::Zero(cout, static_cast<Eigen::Index>(ho) * wo));
    set_fwd(out, [this, out, x, w, b, cin, u, src] {
      const auto& xv = val(x);
      for (Eigen::Index q = 0; q < u->cols(); ++q)
        for (int k = 0; k < 9; ++k) {
          const int idx = (*src)[static_cast<std::size_t>(q) * 9 + k];
          for (int c = 0; c < cin; ++c)
            (*u)(static_cast<Eigen::Index>(c) * 9 + k, q) = idx < 0 ? S(0) : xv(c, idx);
        }
      val(out).noalias() = val(w) * (*u);
      val(out).colwise() += val(b).col(0);
    });
    set_bwd(out, [this, out, x, w, b, cin, u, src] {
      grad(w).noalias() += grad(out) * u->transpose();
      grad(b).col(0) += grad(out).rowwise().sum();
      const Mat gu = val(w).transpose() * grad(out);
      auto& gx = grad(x);
      for (Eigen::Index q = 0; q < gu.cols(); ++q)
        for (int k = 0; k < 9; ++k) {
          const int idx = (*src)[static_cast<std::size_t>(q) * 9 + k];
          if (idx < 0) continue;
          for (int c = 0; c < cin; ++c)
            gx(c, idx) += gu(static_cast<Eigen::Index>(c) * 9 + k, q);
        }
    });
    return out;
  }

  /// One-hot of the argmax of a column distribution. Gradient is defined as
  /// zero (hard selection); used by the hard-class ablation only.
  int hardmax_col(int dist) {
    if (val(dist).cols() != 1) throw ShapeError("hardmax_col expects a column");
    int out = push(Mat::Zero(val(dist).rows(), 1));
    set_fwd(out, [this, out, dist] {
      Eigen::Index i;
      val(dist).col(0).maxCoeff(&i);
      val(out).setZero();
      val(out)(i, 0) = S(1);
    });
    // no bwd: selection is piecewise constant
    return out;
  }

 private:
  struct Node {
    Mat val, grad;
    std::function<void()> fwd, bwd;
  };

  int push(Mat v, std::function<void()> f = nullptr, std::function<void()> b = nullptr) {
    nodes_.push_back(Node{std::move(v), Mat(), std::move(f), std::move(b)});
    nodes_.back().grad.setZero(nodes_.back().val.rows(), nodes_.back().val.cols());
    return static_cast<int>(nodes_.size()) - 1;
  }
  void set_fwd(int id, std::function<void()> f) { nodes_[id].fwd = std::move(f); }
  void set_bwd(int id, std::function<void()> b) { nodes_[id].bwd = std::move(b); }

  std::string shape(int id) const {
    return std::to_string(val(id).rows()) + "x" + std::to_string(val(id).cols());
  }
  void check_same(int a, int b, const char* op) const {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw ShapeError(std::string(op) + " shape mismatch: " + shape(a) + " vs " + shape(b));
  }
  void check_scalar(int id, const char* op) const {
    if (val(id).size() != 1) throw ShapeError(std::string(op) + " expects a scalar node");
  }

  std::vector<Node> nodes_;
};

}  // namespace dronekey
