#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dronekey/autodiff.hpp"
#include "dronekey/dataset.hpp"
#include "dronekey/losses.hpp"
#include "dronekey/rng.hpp"

namespace dronekey {

/// Decoder feature sets are cumulative:
///   1: pose MLP on resolution-normalized 2D keypoints (input 8)
///   2: + learned ray embedding (input 64)
///   3: + 3D keypoint head, its output fed to the pose MLP (input 76)
///   4: + class embedding fused with the rays (input 140, full model)
struct ModelConfig {
  int resolution = 128;
  int d = 64;        // token dimension; equals the last backbone channel count
  int n_layers = 4;  // self-attention layers
  int n_heads = 4;
  int n_classes = 7;
  int dff = 128;  // transformer feed-forward width
  int decoder_config = 4;
  bool encoder_enabled = true;  // false: ground-truth keypoints + one-hot class in
  bool class_onehot = false;    // true: class embedding sees argmax one-hot
  CameraIntrinsics intrinsics{256, 256, 64, 64};
  std::uint64_t init_seed = 7;

  int tokens() const { return (resolution / 16) * (resolution / 16); }
  void validate() const;
  bool operator==(const ModelConfig& o) const;
};

struct ForwardOutput {
  Eigen::Matrix<double, 4, 2> y2d = Eigen::Matrix<double, 4, 2>::Zero();
  Eigen::VectorXd class_dist;  // encoder head output, or the fed-in distribution
  bool has_y3d = false;
  Eigen::Matrix<double, 3, 4> y3d = Eigen::Matrix<double, 3, 4>::Zero();  // column = keypoint
  Eigen::Vector3d r_pred = Eigen::Vector3d::Zero();
  Eigen::Vector3d t_pred = Eigen::Vector3d::Zero();
  LossBreakdown losses;
};

struct ParamRef {
  std::string name;
  int node = -1;
};

struct NamedMatrix {
  std::string name;
  Eigen::MatrixXf value;
};

struct CheckpointData {
  ModelConfig config;
  std::vector<NamedMatrix> params;
};

void save_checkpoint_data(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint_data(const std::string& path);

// Head formulas as plain functions, shared with the property fuzz tests.
Eigen::VectorXd softmax_vec(const Eigen::VectorXd& logits);
Eigen::VectorXd gate_weights(const Eigen::MatrixXd& w_g, const Eigen::VectorXd& x_ir);
Eigen::VectorXd classify(const Eigen::MatrixXd& w_cls, const Eigen::VectorXd& x_cls);
Eigen::MatrixXd predict_keypoints(const Eigen::VectorXd& gate,
                                  const std::vector<Eigen::MatrixXd>& compact_reps);

/// Keypoint encoder + pose decoder over one shared tape. The graph is built
/// once per instance; forward()/backward() re-run it for the current leaf
/// values. Instances are neither copyable nor movable (tape closures hold
/// stable indices).
template <typename S>
class DroneKeyModelT {
 public:
  using Mat = typename Tape<S>::Mat;

  explicit DroneKeyModelT(const ModelConfig& cfg) : cfg_(cfg), tape_(new Tape<S>()) {
    cfg_.validate();
    weights_[0] = S(1);
    weights_[1] = S(1);
    build();
  }
  DroneKeyModelT(const DroneKeyModelT&) = delete;
  DroneKeyModelT& operator=(const DroneKeyModelT&) = delete;

  const ModelConfig& config() const { return cfg_; }
  Tape<S>& tape() { return *tape_; }
  const std::vector<ParamRef>& params() const { return params_; }

  void set_image(const Image& img) {
    if (!cfg_.encoder_enabled) throw ConfigError("encoder disabled; feed keypoints instead");
    if (img.width != cfg_.resolution || img.height != cfg_.resolution)
      throw ShapeError("image is " + std::to_string(img.width) + "x" +
                       std::to_string(img.height) + ", model expects " +
                       std::to_string(cfg_.resolution) + " square");
    auto& v = tape_->val(id_image_);
    const int n = cfg_.resolution * cfg_.resolution;
    for (int p = 0; p < n; ++p)
      for (int c = 0; c < 3; ++c) v(c, p) = S(img.data[3 * p + c]) / S(255);
  }

  /// Encoder-off inputs: ground-truth keypoints and a class distribution
  /// (normally one-hot).
  void set_keypoint_input(const Eigen::Matrix<double, 4, 2>& y2d) {
    if (cfg_.encoder_enabled) throw ConfigError("encoder enabled; feed an image instead");
    tape_->val(id_in_y2d_) = y2d.template cast<S>();
  }
  void set_class_input(const Eigen::VectorXd& dist) {
    if (cfg_.encoder_enabled) throw ConfigError("encoder enabled; feed an image instead");
    if (dist.size() != cfg_.n_classes) throw ShapeError("class distribution length mismatch");
    tape_->val(id_in_cls_) = dist.template cast<S>();
  }

  void set_targets(const Annotation& ann) {
    tape_->val(id_gt2d_) = Eigen::Matrix<double, 4, 2>(ann.keypoints_2d).template cast<S>();
    Eigen::Matrix<double, 3, 4> kp3;
    for (int k = 0; k < 4; ++k) kp3.col(k) = ann.keypoints_3d[k];
    tape_->val(id_gt3d_) = kp3.template cast<S>();
    tape_->val(id_gtrot_) = Eigen::Vector3d(ann.rot).template cast<S>();
    tape_->val(id_gttrans_) = Eigen::Vector3d(ann.trans).template cast<S>();
    label_ = ann.class_id;
    if (label_ < 0 || label_ >= cfg_.n_classes)
      throw Error("annotation class id " + std::to_string(label_) + " out of range");
  }

  void set_loss_weights(double w_enc, double w_dec) {
    weights_[0] = S(w_enc);
    weights_[1] = S(w_dec);
  }

  ForwardOutput forward() {
    tape_->forward();
    ForwardOutput out;
    out.y2d = tape_->val(id_y2d_).template cast<double>();
    out.class_dist = tape_->val(id_ycls_).col(0).template cast<double>();
    if (id_y3d_ >= 0) {
      out.has_y3d = true;
      out.y3d = tape_->val(id_y3d_).template cast<double>();
    }
    out.r_pred = tape_->val(id_r_).col(0).template cast<double>();
    out.t_pred = tape_->val(id_t_).col(0).template cast<double>();
    out.losses.l_2d = tape_->val(id_l2d_)(0, 0);
    out.losses.l_cls = tape_->val(id_lcls_)(0, 0);
    out.losses.l_3d = tape_->val(id_l3d_)(0, 0);
    out.losses.l_rot = tape_->val(id_lrot_)(0, 0);
    out.losses.l_trans = tape_->val(id_ltrans_)(0, 0);
    out.losses.l_enc = tape_->val(id_lenc_)(0, 0);
    out.losses.l_dec = tape_->val(id_ldec_)(0, 0);
    out.losses.l_total = tape_->val(id_total_)(0, 0);
    return out;
  }

  void backward() { tape_->backward(id_total_); }

  int loss_node() const { return id_total_; }
  int encoder_loss_node() const { return id_lenc_; }
  int decoder_loss_node() const { return id_ldec_; }

  CheckpointData export_params() const {
    CheckpointData data;
    data.config = cfg_;
    for (const auto& p : params_)
      data.params.push_back({p.name, tape_->val(p.node).template cast<float>()});
    return data;
  }

  void import_params(const CheckpointData& data) {
    if (!(data.config == cfg_))
      throw ConfigError("checkpoint config does not match this model configuration");
    if (data.params.size() != params_.size())
      throw LoadError("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& src = data.params[i];
      if (src.name != params_[i].name)
        throw LoadError("checkpoint parameter '" + src.name + "' out of order, expected '" +
                        params_[i].name + "'");
      auto& dst = tape_->val(params_[i].node);
      if (src.value.rows() != dst.rows() || src.value.cols() != dst.cols())
        throw LoadError("checkpoint parameter '" + src.name + "' has wrong shape");
      dst = src.value.template cast<S>();
    }
  }

 private:
  int param(const std::string& name, int rows, int cols, double stddev, double fill = 0.0,
            double mean = 0.0) {
    int id = tape_->leaf(rows, cols);
    auto& v = tape_->val(id);
    if (stddev > 0) {
      for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) v(r, c) = S(mean + init_rng_->gaussian() * stddev);
    } else {
      v.setConstant(S(fill));
    }
    params_.push_back({name, id});
    return id;
  }

  Mat positional_encoding() const {
    const int m = cfg_.tokens();
    Mat pe(cfg_.d, m);
    for (int i = 0; i < cfg_.d; ++i) {
      const double rate = std::pow(10000.0, -double(i - (i % 2)) / cfg_.d);
      for (int t = 0; t < m; ++t)
        pe(i, t) = S((i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate));
    }
    return pe;
  }

  int conv_block(int x, int cin, int hw, int cout, const std::string& name) {
    const double he = std::sqrt(2.0 / (cin * 9));
    int w = param(name + "_w", cout, cin * 9, he);
    int b = param(name + "_b", cout, 1, 0.0);
    return tape_->relu(tape_->conv3x3s2(x, w, b, cin, hw, hw));
  }

  int attention_layer(int z, int l) {
    auto& t = *tape_;
    const int d = cfg_.d, dh = d / cfg_.n_heads;
    const std::string pfx = "layer" + std::to_string(l) + "_";
    const double he = std::sqrt(2.0 / d);
    int ln1g = param(pfx + "ln1_g", d, 1, 0.0, 1.0);
    int ln1b = param(pfx + "ln1_b", d, 1, 0.0);
    int wq = param(pfx + "wq", d, d, he), bq = param(pfx + "bq", d, 1, 0.0);
    int wk = param(pfx + "wk", d, d, he), bk = param(pfx + "bk", d, 1, 0.0);
    int wv = param(pfx + "wv", d, d, he), bv = param(pfx + "bv", d, 1, 0.0);
    int wo = param(pfx + "wo", d, d, he), bo = param(pfx + "bo", d, 1, 0.0);
    int ln2g = param(pfx + "ln2_g", d, 1, 0.0, 1.0);
    int ln2b = param(pfx + "ln2_b", d, 1, 0.0);
    int w1 = param(pfx + "ff_w1", cfg_.dff, d, he), b1 = param(pfx + "ff_b1", cfg_.dff, 1, 0.0);
    int w2 = param(pfx + "ff_w2", d, cfg_.dff, std::sqrt(2.0 / cfg_.dff));
    int b2 = param(pfx + "ff_b2", d, 1, 0.0);

    int a_in = t.layernorm_cols(z, ln1g, ln1b);
    int q = t.add_colvec(t.matmul(wq, a_in), bq);
    int k = t.add_colvec(t.matmul(wk, a_in), bk);
    int v = t.add_colvec(t.matmul(wv, a_in), bv);
    std::vector<int> heads;
    const S inv_sqrt_dh = S(1.0 / std::sqrt(double(dh)));
    for (int h = 0; h < cfg_.n_heads; ++h) {
      int qh = t.slice_rows(q, h * dh, dh);
      int kh = t.slice_rows(k, h * dh, dh);
      int vh = t.slice_rows(v, h * dh, dh);
      int scores = t.scale(t.matmul(t.transpose(qh), kh), inv_sqrt_dh);
      int attn = t.softmax_rows(scores);
      heads.push_back(t.matmul(vh, t.transpose(attn)));
    }
    int proj = t.add_colvec(t.matmul(wo, t.vstack(heads)), bo);
    int z1 = t.add(z, proj);
    int b_in = t.layernorm_cols(z1, ln2g, ln2b);
    int ff = t.add_colvec(
        t.matmul(w2, t.relu(t.add_colvec(t.matmul(w1, b_in), b1))), b2);
    return t.add(z1, ff);
  }

  void build() {
    auto& t = *tape_;
    init_rng_ = std::make_unique<Rng>(cfg_.init_seed);
    const int res = cfg_.resolution, d = cfg_.d, m = cfg_.tokens();

    id_gt2d_ = t.leaf(4, 2);
    id_gt3d_ = t.leaf(3, 4);
    id_gtrot_ = t.leaf(3, 1);
    id_gttrans_ = t.leaf(3, 1);

    if (cfg_.encoder_enabled) {
      id_image_ = t.leaf(3, res * res);
      int f1 = conv_block(id_image_, 3, res, 8, "conv1");
      int f2 = conv_block(f1, 8, res / 2, 16, "conv2");
      int f3 = conv_block(f2, 16, res / 4, 32, "conv3");
      int feat = conv_block(f3, 32, res / 8, d, "conv4");  // (d, m)
      int pe = t.constant(positional_encoding());
      int tokens = t.add(feat, pe);
      int cls_tok = param("cls_token", d, 1, 0.02);
      // Positive-mean init: X_IR is a column max, so its entries are mostly
      // positive at init. A zero-mean w_keypoint leaves roughly half of the
      // pre-rectifier coordinates negative on every input, and those
      // coordinates never receive gradient again. The offset starts all
      // eight in the rectifier's linear region.
      int w_kp = param("w_keypoint", 8, d, std::sqrt(1.0 / d), 0.0, 8.0 / d);
      int w_g = param("w_gate", cfg_.n_layers, d, std::sqrt(1.0 / d));
      int w_cls = param("w_class", cfg_.n_classes, d, std::sqrt(1.0 / d));

      int z = t.hstack(cls_tok, tokens);
      std::vector<int> crs;
      int x_ir_last = -1;
      for (int l = 0; l < cfg_.n_layers; ++l) {
        z = attention_layer(z, l);
        int x_l = t.slice_cols(z, 1, m);
        int x_ir = t.colwise_max(x_l);
        crs.push_back(t.reshape(t.matmul(w_kp, x_ir), 4, 2));
        x_ir_last = x_ir;
      }
      id_wgate_ = t.softmax_cols(t.matmul(w_g, x_ir_last));
      id_y2d_ = t.relu(t.gated_sum(id_wgate_, crs));
      int x_cls = t.slice_cols(z, 0, 1);
      id_ycls_ = t.softmax_cols(t.matmul(w_cls, x_cls));
      id_l2d_ = t.mse(id_y2d_, id_gt2d_);
      id_lcls_ = t.cross_entropy(id_ycls_, &label_);
    } else {
      id_in_y2d_ = t.leaf(4, 2);
      id_in_cls_ = t.leaf(cfg_.n_classes, 1);
      id_y2d_ = id_in_y2d_;
      id_ycls_ = id_in_cls_;
      id_l2d_ = t.constant(Mat::Zero(1, 1));
      id_lcls_ = t.constant(Mat::Zero(1, 1));
    }

    int pose_in;
    if (cfg_.decoder_config == 1) {
      pose_in = t.reshape(t.scale(id_y2d_, S(1) / S(res)), 8, 1);
      id_y3d_ = -1;
      id_l3d_ = t.constant(Mat::Zero(1, 1));
    } else {
      int rays = t.pixel_to_rays(id_y2d_, cfg_.intrinsics.fx, cfg_.intrinsics.fy,
                                 cfg_.intrinsics.cx, cfg_.intrinsics.cy);
      int w_ray = param("w_ray", 64, 12, std::sqrt(1.0 / 12));
      int e_ray = t.matmul(w_ray, t.reshape(rays, 12, 1));
      int fused = e_ray;
      if (cfg_.decoder_config == 4) {
        int w_emb = param("w_class_embed", 64, cfg_.n_classes, std::sqrt(1.0 / cfg_.n_classes));
        int cls_in = cfg_.class_onehot ? t.hardmax_col(id_ycls_) : id_ycls_;
        fused = t.vstack(e_ray, t.matmul(w_emb, cls_in));
      }
      if (cfg_.decoder_config >= 3) {
        const int fdim = cfg_.decoder_config == 4 ? 128 : 64;
        int m1 = param("mlp3d_w1", 128, fdim, std::sqrt(2.0 / fdim));
        int m1b = param("mlp3d_b1", 128, 1, 0.0);
        int m2 = param("mlp3d_w2", 12, 128, 0.01);
        int m2b = param("mlp3d_b2", 12, 1, 0.0);
        int y3vec = t.add(t.matmul(m2, t.relu(t.add(t.matmul(m1, fused), m1b))), m2b);
        id_y3d_ = t.reshape(y3vec, 3, 4);
        id_l3d_ = t.mse(id_y3d_, id_gt3d_);
        pose_in = t.vstack(fused, y3vec);
      } else {
        pose_in = fused;
        id_y3d_ = -1;
        id_l3d_ = t.constant(Mat::Zero(1, 1));
      }
    }
    const int pdim = static_cast<int>(t.val(pose_in).rows());
    int p1 = param("pose_w1", 128, pdim, std::sqrt(2.0 / pdim));
    int p1b = param("pose_b1", 128, 1, 0.0);
    int p2 = param("pose_w2", 6, 128, 0.01);
    int p2b = param("pose_b2", 6, 1, 0.0);
    int pose6 = t.add(t.matmul(p2, t.relu(t.add(t.matmul(p1, pose_in), p1b))), p2b);
    id_r_ = t.sigmoid(t.slice_rows(pose6, 0, 3));
    id_t_ = t.slice_rows(pose6, 3, 3);
    id_lrot_ = t.circular_loss(id_r_, id_gtrot_);
    id_ltrans_ = t.mse(id_t_, id_gttrans_);

    id_lenc_ = t.add(id_l2d_, id_lcls_);
    id_ldec_ = t.add(t.add(id_l3d_, id_lrot_), id_ltrans_);
    id_total_ = t.weighted_sum({id_lenc_, id_ldec_}, weights_);
    init_rng_.reset();
  }

  ModelConfig cfg_;
  std::unique_ptr<Tape<S>> tape_;
  std::unique_ptr<Rng> init_rng_;
  std::vector<ParamRef> params_;
  S weights_[2];
  int label_ = 0;

  int id_image_ = -1, id_in_y2d_ = -1, id_in_cls_ = -1;
  int id_gt2d_ = -1, id_gt3d_ = -1, id_gtrot_ = -1, id_gttrans_ = -1;
  int id_y2d_ = -1, id_ycls_ = -1, id_wgate_ = -1, id_y3d_ = -1, id_r_ = -1, id_t_ = -1;
  int id_l2d_ = -1, id_lcls_ = -1, id_l3d_ = -1, id_lrot_ = -1, id_ltrans_ = -1;
  int id_lenc_ = -1, id_ldec_ = -1, id_total_ = -1;

 public:
  int gate_node() const { return id_wgate_; }
  int y2d_node() const { return id_y2d_; }
  int ycls_node() const { return id_ycls_; }
  int r_node() const { return id_r_; }
  int t_node() const { return id_t_; }
};

using DroneKeyModel = DroneKeyModelT<float>;

template <typename S>
std::unique_ptr<DroneKeyModelT<S>> model_from_checkpoint(const CheckpointData& data) {
  auto model = std::make_unique<DroneKeyModelT<S>>(data.config);
  model->import_params(data);
  return model;
}

}  // namespace dronekey
