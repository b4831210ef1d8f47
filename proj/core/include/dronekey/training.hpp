#pragma once

#include <map>
#include <string>
#include <vector>

#include "dronekey/dataset.hpp"
#include "dronekey/losses.hpp"
#include "dronekey/model.hpp"

namespace dronekey {

struct TrainConfig {
  double lr = 1e-5;   // full-scale default; desk presets override upward
  int batch_size = 32;
  int epochs = 100;
  std::uint64_t seed = 1;
  WeightingStrategy strategy = WeightingStrategy::kEqual;
  ModelConfig model;
  bool shuffle = true;
  std::string out_dir;  // receives train_log.jsonl, best.ckpt, final.ckpt
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  LossBreakdown train_loss;  // epoch means
  double val_rot_mae_deg = 0;
  double val_trans_mae_m = 0;
  double val_class_acc = 0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  int best_epoch = -1;
  double best_val_rot_mae_deg = 0;
  double best_val_trans_mae_m = 0;
  std::string best_checkpoint;
  std::string final_checkpoint;
};

/// Cosine annealing from lr0 to 0 across epochs; lr(0) = lr0 and a single
/// epoch keeps the initial rate.
double cosine_lr(double lr0, int epoch, int total_epochs);

/// Lower middle element for even counts; throws on empty input.
double median_lower(std::vector<double> values);

/// Index minimizing rotation MAE, ties broken by translation MAE, then by
/// earliest index. Pairs are (rot_mae, trans_mae) per epoch.
int select_checkpoint(const std::vector<std::pair<double, double>>& val_metrics);

std::vector<Sample> load_split(const std::string& root, const DatasetManifest& m,
                               const std::string& split);

/// Adam over all tape parameters of a float model. step() consumes externally
/// accumulated (batch-averaged) gradients.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(DroneKeyModel& model, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8);
  void step(double lr, const std::vector<Eigen::MatrixXf>& grads);

 private:
  DroneKeyModel& model_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Eigen::MatrixXf> m_, v_;
};

/// Routes a sample into the model: image when the encoder runs, ground-truth
/// keypoints plus one-hot class otherwise. Targets are always set.
void feed_sample(DroneKeyModel& model, const Sample& sample);

/// Full optimization loop: batched Adam with the cosine schedule, per-epoch
/// JSONL logging, validation each epoch, and best-checkpoint selection on
/// (rotation MAE, translation MAE, epoch) lexicographic improvement.
/// Deterministic for a fixed config and seed. NaN losses abort with a
/// diagnostic log record and a TrainingError.
TrainResult train(const TrainConfig& cfg, const std::string& data_root);

struct SampleError {
  long index = 0;
  std::string scene_id;
  int class_id = 0;
  int background_id = 0;
  double rot_err_deg = 0;
  double trans_err_m = 0;
  bool class_correct = false;
  Eigen::Vector3d pred_r = Eigen::Vector3d::Zero();
  Eigen::Vector3d pred_t = Eigen::Vector3d::Zero();
};

struct GroupStat {
  long count = 0;
  double rot_mae_deg = 0, rot_medae_deg = 0;
  double trans_mae_m = 0, trans_medae_m = 0;
  double class_acc = 0;
};

struct EvaluationReport {
  std::string split;
  std::vector<SampleError> per_sample;
  GroupStat aggregate;
  std::map<std::string, GroupStat> per_class;  // keyed by class name
  std::map<std::string, GroupStat> per_scene;
};

GroupStat aggregate_errors(const std::vector<SampleError>& errors);

/// Rotation error: normalized angular difference between the Euler-derived
/// matrices, reported in degrees (normalized value x 180). Translation
/// error: Euclidean distance in meters.
EvaluationReport evaluate_model(DroneKeyModel& model, const std::vector<Sample>& samples,
                                const std::vector<DroneClassSpec>& classes,
                                const std::string& split);

/// Loads the checkpoint, refuses config/dataset mismatches, evaluates a split.
EvaluationReport evaluate_checkpoint(const std::string& checkpoint_path,
                                     const std::string& data_root, const std::string& split);

void write_report(const std::string& path, const EvaluationReport& report);
void write_per_sample_errors(const std::string& path, const EvaluationReport& report);

/// Keypoints + PnP baseline over one split, using each class's true propeller
/// layout as the size prior. source "gt" reads annotation keypoints; "encoder"
/// runs the checkpoint's keypoint head on the images. Frames where the solver
/// fails to converge keep its best iterate.
EvaluationReport run_baseline(const std::string& data_root, const std::string& split,
                              const std::string& source,
                              const std::string& checkpoint_path = "");

struct FpsResult {
  double fps = 0;
  double median_ms = 0;
  int passes = 0;
  std::string device_tag;
};

/// Median single-image forward time over >= 100 passes after 10 warm-ups.
/// The probe image lives in memory; no dataset I/O is timed.
FpsResult measure_fps(DroneKeyModel& model, const Image& probe, int passes = 100);

}  // namespace dronekey
