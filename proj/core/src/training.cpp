#include "dronekey/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>

#include "dronekey/pnp.hpp"

#include "dronekey/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dronekey {

namespace {

constexpr std::uint64_t kShuffleStream = 0xE90CULL;

Eigen::VectorXd one_hot(int label, int n) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  v[label] = 1.0;
  return v;
}

std::string cpu_tag() {
  std::ifstream f("/proc/cpuinfo");
  std::string line;
  while (std::getline(f, line)) {
    const auto pos = line.find("model name");
    if (pos != std::string::npos) {
      const auto colon = line.find(':');
      if (colon != std::string::npos && colon + 2 <= line.size())
        return line.substr(colon + 2);
    }
  }
  return "unknown-cpu";
}

void check_model_matches_dataset(const ModelConfig& mc, const DatasetManifest& m) {
  if (m.width != m.height)
    throw ConfigError("model consumes square images; dataset is " + std::to_string(m.width) +
                      "x" + std::to_string(m.height));
  if (mc.resolution != m.width)
    throw ConfigError("model resolution " + std::to_string(mc.resolution) +
                      " does not match dataset resolution " + std::to_string(m.width));
  if (mc.n_classes != static_cast<int>(m.classes.size()))
    throw ConfigError("model has " + std::to_string(mc.n_classes) + " classes, dataset has " +
                      std::to_string(m.classes.size()));
  const auto& a = mc.intrinsics;
  const auto& b = m.intrinsics;
  if (a.fx != b.fx || a.fy != b.fy || a.cx != b.cx || a.cy != b.cy)
    throw ConfigError("model intrinsics do not match dataset intrinsics");
}

}  // namespace

double cosine_lr(double lr0, int epoch, int total_epochs) {
  if (total_epochs <= 1) return lr0;
  const double p = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  return lr0 * 0.5 * (1.0 + std::cos(M_PI * p));
}

double median_lower(std::vector<double> values) {
  if (values.empty()) throw Error("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : values[n / 2 - 1];
}

int select_checkpoint(const std::vector<std::pair<double, double>>& val_metrics) {
  if (val_metrics.empty()) throw Error("no evaluated checkpoints to select from");
  int best = 0;
  for (int i = 1; i < static_cast<int>(val_metrics.size()); ++i) {
    const auto& [rot, trans] = val_metrics[i];
    const auto& [brot, btrans] = val_metrics[best];
    if (rot < brot || (rot == brot && trans < btrans)) best = i;
  }
  return best;
}

std::vector<Sample> load_split(const std::string& root, const DatasetManifest& m,
                               const std::string& split) {
  std::vector<Sample> out;
  for (long idx : split_indices(m, split)) out.push_back(load_sample(root, m, idx));
  return out;
}

AdamOptimizer::AdamOptimizer(DroneKeyModel& model, double beta1, double beta2, double eps)
    : model_(model), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : model.params()) {
    const auto& v = model.tape().val(p.node);
    m_.emplace_back(Eigen::MatrixXf::Zero(v.rows(), v.cols()));
    v_.emplace_back(Eigen::MatrixXf::Zero(v.rows(), v.cols()));
  }
}

void AdamOptimizer::step(double lr, const std::vector<Eigen::MatrixXf>& grads) {
  if (grads.size() != m_.size()) throw ShapeError("gradient list does not match parameters");
  ++t_;
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float corr1 = 1.0f - std::pow(b1, static_cast<float>(t_));
  const float corr2 = 1.0f - std::pow(b2, static_cast<float>(t_));
  const float alpha = static_cast<float>(lr);
  const float eps = static_cast<float>(eps_);
  const auto& params = model_.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0f - b1) * grads[i];
    v_[i] = b2 * v_[i].array() + (1.0f - b2) * grads[i].array().square();
    auto& val = model_.tape().val(params[i].node);
    val.array() -= alpha * (m_[i].array() / corr1) /
                   ((v_[i].array() / corr2).sqrt() + eps);
  }
}

void feed_sample(DroneKeyModel& model, const Sample& sample) {
  if (model.config().encoder_enabled) {
    model.set_image(sample.image);
  } else {
    model.set_keypoint_input(sample.ann.keypoints_2d);
    model.set_class_input(one_hot(sample.ann.class_id, model.config().n_classes));
  }
  model.set_targets(sample.ann);
}

GroupStat aggregate_errors(const std::vector<SampleError>& errors) {
  GroupStat g;
  g.count = static_cast<long>(errors.size());
  if (errors.empty()) return g;
  std::vector<double> rot, trans;
  long correct = 0;
  for (const auto& e : errors) {
    rot.push_back(e.rot_err_deg);
    trans.push_back(e.trans_err_m);
    g.rot_mae_deg += e.rot_err_deg;
    g.trans_mae_m += e.trans_err_m;
    if (e.class_correct) ++correct;
  }
  g.rot_mae_deg /= g.count;
  g.trans_mae_m /= g.count;
  g.rot_medae_deg = median_lower(rot);
  g.trans_medae_m = median_lower(trans);
  g.class_acc = static_cast<double>(correct) / g.count;
  return g;
}

EvaluationReport evaluate_model(DroneKeyModel& model, const std::vector<Sample>& samples,
                                const std::vector<DroneClassSpec>& classes,
                                const std::string& split) {
  EvaluationReport rep;
  rep.split = split;
  long idx = 0;
  for (const auto& s : samples) {
    feed_sample(model, s);
    const ForwardOutput out = model.forward();
    SampleError e;
    e.index = idx++;
    e.scene_id = s.ann.scene_id;
    e.class_id = s.ann.class_id;
    e.background_id = s.ann.background_id;
    const Eigen::Matrix3d rp = euler_norm_to_matrix(out.r_pred);
    const Eigen::Matrix3d rg = euler_norm_to_matrix(s.ann.rot);
    e.rot_err_deg = relative_rotation_angle(rp, rg) * 180.0;
    e.trans_err_m = (out.t_pred - s.ann.trans).norm();
    Eigen::Index argmax;
    out.class_dist.maxCoeff(&argmax);
    e.class_correct = static_cast<int>(argmax) == s.ann.class_id;
    e.pred_r = out.r_pred;
    e.pred_t = out.t_pred;
    rep.per_sample.push_back(std::move(e));
  }
  rep.aggregate = aggregate_errors(rep.per_sample);
  std::map<std::string, std::vector<SampleError>> by_class, by_scene;
  for (const auto& e : rep.per_sample) {
    std::string cname = "class" + std::to_string(e.class_id);
    for (const auto& c : classes)
      if (c.class_id == e.class_id) cname = c.name;
    by_class[cname].push_back(e);
    by_scene[e.scene_id].push_back(e);
  }
  for (const auto& [k, v] : by_class) rep.per_class[k] = aggregate_errors(v);
  for (const auto& [k, v] : by_scene) rep.per_scene[k] = aggregate_errors(v);
  return rep;
}

EvaluationReport evaluate_checkpoint(const std::string& checkpoint_path,
                                     const std::string& data_root, const std::string& split) {
  const CheckpointData ckpt = load_checkpoint_data(checkpoint_path);
  const DatasetManifest m = read_manifest((fs::path(data_root) / "manifest").string());
  check_model_matches_dataset(ckpt.config, m);
  auto model = model_from_checkpoint<float>(ckpt);
  const auto samples = load_split(data_root, m, split);
  if (samples.empty()) throw Error("split '" + split + "' has no samples");
  return evaluate_model(*model, samples, m.classes, split);
}

TrainResult train(const TrainConfig& cfg, const std::string& data_root) {
  if (cfg.lr <= 0 || cfg.batch_size <= 0 || cfg.epochs <= 0)
    throw ConfigError("learning rate, batch size, and epochs must be positive");
  const DatasetManifest manifest =
      read_manifest((fs::path(data_root) / "manifest").string());
  check_model_matches_dataset(cfg.model, manifest);
  const auto train_samples = load_split(data_root, manifest, "train");
  const auto valid_samples = load_split(data_root, manifest, "valid");
  if (train_samples.empty()) throw Error("train split is empty");
  if (valid_samples.empty()) throw Error("valid split is empty");

  fs::create_directories(cfg.out_dir);
  std::ofstream log_file(fs::path(cfg.out_dir) / "train_log.jsonl");
  if (!log_file) throw LoadError("cannot open training log in " + cfg.out_dir);

  DroneKeyModel model(cfg.model);
  AdamOptimizer adam(model);
  const auto& params = model.params();
  std::vector<Eigen::MatrixXf> grad_acc;
  for (const auto& p : params) {
    const auto& v = model.tape().val(p.node);
    grad_acc.emplace_back(Eigen::MatrixXf::Zero(v.rows(), v.cols()));
  }

  TrainResult result;
  std::vector<int> order(train_samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  double best_rot = std::numeric_limits<double>::infinity();
  double best_trans = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
    const LossWeights w = strategy_weights(cfg.strategy, epoch, cfg.epochs);
    model.set_loss_weights(w.w_enc, w.w_dec);

    if (cfg.shuffle) {
      Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), kShuffleStream));
      for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_int(0, i)]);
    }

    LossBreakdown sums;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end =
          std::min(cursor + static_cast<std::size_t>(cfg.batch_size), order.size());
      const auto batch_n = static_cast<float>(batch_end - cursor);
      for (auto& g : grad_acc) g.setZero();
      for (; cursor < batch_end; ++cursor) {
        const Sample& s = train_samples[order[cursor]];
        feed_sample(model, s);
        const ForwardOutput out = model.forward();
        if (!std::isfinite(out.losses.l_total)) {
          json diag{{"event", "nan_abort"},
                    {"epoch", epoch},
                    {"sample", order[cursor]},
                    {"l_total", "nan"}};
          log_file << diag.dump() << "\n" << std::flush;
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                              ", sample " + std::to_string(order[cursor]));
        }
        model.backward();
        for (std::size_t i = 0; i < params.size(); ++i)
          grad_acc[i] += model.tape().grad(params[i].node);
        sums.l_2d += out.losses.l_2d;
        sums.l_cls += out.losses.l_cls;
        sums.l_3d += out.losses.l_3d;
        sums.l_rot += out.losses.l_rot;
        sums.l_trans += out.losses.l_trans;
        sums.l_enc += out.losses.l_enc;
        sums.l_dec += out.losses.l_dec;
        sums.l_total += out.losses.l_total;
      }
      for (auto& g : grad_acc) g /= batch_n;
      adam.step(lr, grad_acc);
    }
    const double inv_n = 1.0 / static_cast<double>(train_samples.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss.l_2d = sums.l_2d * inv_n;
    rec.train_loss.l_cls = sums.l_cls * inv_n;
    rec.train_loss.l_3d = sums.l_3d * inv_n;
    rec.train_loss.l_rot = sums.l_rot * inv_n;
    rec.train_loss.l_trans = sums.l_trans * inv_n;
    rec.train_loss.l_enc = sums.l_enc * inv_n;
    rec.train_loss.l_dec = sums.l_dec * inv_n;
    rec.train_loss.l_total = sums.l_total * inv_n;

    const EvaluationReport val = evaluate_model(model, valid_samples, manifest.classes, "valid");
    rec.val_rot_mae_deg = val.aggregate.rot_mae_deg;
    rec.val_trans_mae_m = val.aggregate.trans_mae_m;
    rec.val_class_acc = val.aggregate.class_acc;
    result.log.push_back(rec);

    json j{{"epoch", rec.epoch},
           {"lr", rec.lr},
           {"l_2d", rec.train_loss.l_2d},
           {"l_cls", rec.train_loss.l_cls},
           {"l_3d", rec.train_loss.l_3d},
           {"l_rot", rec.train_loss.l_rot},
           {"l_trans", rec.train_loss.l_trans},
           {"l_enc", rec.train_loss.l_enc},
           {"l_dec", rec.train_loss.l_dec},
           {"l_total", rec.train_loss.l_total},
           {"val_rot_mae_deg", rec.val_rot_mae_deg},
           {"val_trans_mae_m", rec.val_trans_mae_m},
           {"val_class_acc", rec.val_class_acc}};
    log_file << j.dump() << "\n" << std::flush;

    // Strict lexicographic improvement keeps the earliest epoch on ties.
    if (rec.val_rot_mae_deg < best_rot ||
        (rec.val_rot_mae_deg == best_rot && rec.val_trans_mae_m < best_trans)) {
      best_rot = rec.val_rot_mae_deg;
      best_trans = rec.val_trans_mae_m;
      result.best_epoch = epoch;
      result.best_val_rot_mae_deg = best_rot;
      result.best_val_trans_mae_m = best_trans;
      result.best_checkpoint = (fs::path(cfg.out_dir) / "best.ckpt").string();
      save_checkpoint_data(result.best_checkpoint, model.export_params());
    }
  }
  result.final_checkpoint = (fs::path(cfg.out_dir) / "final.ckpt").string();
  save_checkpoint_data(result.final_checkpoint, model.export_params());
  return result;
}

void write_report(const std::string& path, const EvaluationReport& report) {
  std::ofstream f(path);
  if (!f) throw LoadError("cannot open for writing: " + path);
  char buf[256];
  auto line = [&](const std::string& kind, const std::string& name, const GroupStat& g) {
    std::snprintf(buf, sizeof(buf),
                  "%s %s rot_mae_deg %.6f rot_medae_deg %.6f trans_mae_m %.6f "
                  "trans_medae_m %.6f class_acc %.6f count %ld\n",
                  kind.c_str(), name.c_str(), g.rot_mae_deg, g.rot_medae_deg, g.trans_mae_m,
                  g.trans_medae_m, g.class_acc, g.count);
    f << buf;
  };
  f << "evaluation-report 1\n";
  f << "split " << report.split << "\n";
  f << "samples " << report.per_sample.size() << "\n";
  line("aggregate", "all", report.aggregate);
  for (const auto& [name, g] : report.per_class) line("class", name, g);
  for (const auto& [name, g] : report.per_scene) line("scene", name, g);
  if (!f) throw LoadError("write failed: " + path);
}

void write_per_sample_errors(const std::string& path, const EvaluationReport& report) {
  std::ofstream f(path);
  if (!f) throw LoadError("cannot open for writing: " + path);
  f << "index scene class bg rot_err_deg trans_err_m class_ok "
       "pred_r0 pred_r1 pred_r2 pred_tx pred_ty pred_tz\n";
  char buf[320];
  for (const auto& e : report.per_sample) {
    std::snprintf(buf, sizeof(buf),
                  "%ld %s %d %d %.6f %.6f %d %.6f %.6f %.6f %.6f %.6f %.6f\n", e.index,
                  e.scene_id.c_str(), e.class_id, e.background_id, e.rot_err_deg, e.trans_err_m,
                  e.class_correct ? 1 : 0, e.pred_r[0], e.pred_r[1], e.pred_r[2], e.pred_t[0],
                  e.pred_t[1], e.pred_t[2]);
    f << buf;
  }
  if (!f) throw LoadError("write failed: " + path);
}

EvaluationReport run_baseline(const std::string& data_root, const std::string& split,
                              const std::string& source, const std::string& checkpoint_path) {
  if (source != "gt" && source != "encoder")
    throw ConfigError("baseline keypoint source must be 'gt' or 'encoder'");
  const DatasetManifest m = read_manifest((fs::path(data_root) / "manifest").string());
  const auto samples = load_split(data_root, m, split);
  if (samples.empty()) throw Error("split '" + split + "' has no samples");

  std::unique_ptr<DroneKeyModel> model;
  if (source == "encoder") {
    if (checkpoint_path.empty()) throw ConfigError("encoder-sourced baseline needs a checkpoint");
    const CheckpointData ckpt = load_checkpoint_data(checkpoint_path);
    check_model_matches_dataset(ckpt.config, m);
    model = model_from_checkpoint<float>(ckpt);
  }

  EvaluationReport rep;
  rep.split = split;
  long idx = 0;
  for (const auto& s : samples) {
    Eigen::Matrix<double, 4, 2> kp = s.ann.keypoints_2d;
    int pred_class = s.ann.class_id;
    if (model) {
      feed_sample(*model, s);
      const ForwardOutput out = model->forward();
      kp = out.y2d;
      Eigen::Index argmax;
      out.class_dist.maxCoeff(&argmax);
      pred_class = static_cast<int>(argmax);
    }
    PnPProblem problem;
    problem.points_3d_body = square_layout(m.classes[s.ann.class_id].body_extent);
    for (int k = 0; k < 4; ++k) problem.points_2d[k] = kp.row(k).transpose();
    problem.intrinsics = m.intrinsics;
    RigidPose pose;
    try {
      pose = pnp_solve(problem);
    } catch (const ConvergenceError& e) {
      pose = e.best();
    }
    SampleError e;
    e.index = idx++;
    e.scene_id = s.ann.scene_id;
    e.class_id = s.ann.class_id;
    e.background_id = s.ann.background_id;
    const Eigen::Matrix3d rg = euler_norm_to_matrix(s.ann.rot);
    e.rot_err_deg = relative_rotation_angle(pose.rotation, rg) * 180.0;
    e.trans_err_m = (pose.translation - s.ann.trans).norm();
    e.class_correct = pred_class == s.ann.class_id;
    e.pred_r = matrix_to_euler_norm(pose.rotation);
    e.pred_t = pose.translation;
    rep.per_sample.push_back(std::move(e));
  }
  rep.aggregate = aggregate_errors(rep.per_sample);
  std::map<std::string, std::vector<SampleError>> by_class, by_scene;
  for (const auto& e : rep.per_sample) {
    by_class[m.classes[e.class_id].name].push_back(e);
    by_scene[e.scene_id].push_back(e);
  }
  for (const auto& [k, v] : by_class) rep.per_class[k] = aggregate_errors(v);
  for (const auto& [k, v] : by_scene) rep.per_scene[k] = aggregate_errors(v);
  return rep;
}

FpsResult measure_fps(DroneKeyModel& model, const Image& probe, int passes) {
  passes = std::max(passes, 100);
  if (!model.config().encoder_enabled)
    throw ConfigError("FPS measurement needs the image encoder enabled");
  for (int i = 0; i < 10; ++i) {
    model.set_image(probe);
    model.forward();
  }
  std::vector<double> ms(passes);
  for (int i = 0; i < passes; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    model.set_image(probe);
    model.forward();
    const auto t1 = std::chrono::steady_clock::now();
    ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  FpsResult r;
  r.median_ms = median_lower(ms);
  r.fps = 1000.0 / r.median_ms;
  r.passes = passes;
  r.device_tag = cpu_tag();
  return r;
}

}  // namespace dronekey
