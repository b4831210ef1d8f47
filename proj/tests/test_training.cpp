#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dronekey/training.hpp"

using namespace dronekey;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("dronekey_train_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// Desk-sized training config used by the smoke runs below.
TrainConfig desk_train_config(const std::string& out) {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.seed = 5;
  cfg.out_dir = out;
  cfg.model.resolution = 128;
  cfg.model.d = 16;
  cfg.model.n_layers = 2;
  cfg.model.n_heads = 2;
  cfg.model.n_classes = 2;
  cfg.model.dff = 32;
  cfg.model.intrinsics = {256, 256, 64, 64};
  cfg.model.init_seed = 7;
  return cfg;
}

const std::string& desk_root() {
  static std::string root;
  if (root.empty()) {
    static TempDir dir("deskdata");
    generate_dataset(desk_config(dir.str()));
    root = dir.str();
  }
  return root;
}

}  // namespace

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(0.01, 0, 100) == doctest::Approx(0.01).epsilon(1e-12));
  // Progress runs over epochs-1 so the last epoch reaches the annealed floor.
  CHECK(cosine_lr(0.01, 50, 101) == doctest::Approx(0.005).epsilon(1e-9));
  CHECK(cosine_lr(0.01, 99, 100) == doctest::Approx(0.0).epsilon(1e-12));
  // A single epoch trains at the full rate.
  CHECK(cosine_lr(0.02, 0, 1) == doctest::Approx(0.02).epsilon(1e-12));
  // Monotone decay.
  for (int e = 1; e < 40; ++e) CHECK(cosine_lr(1.0, e, 40) < cosine_lr(1.0, e - 1, 40));
}

TEST_CASE("lower-median convention") {
  CHECK(median_lower({0.3}) == 0.3);
  CHECK(median_lower({0.1, 0.2, 0.9}) == 0.2);
  CHECK(median_lower({0.9, 0.1}) == 0.1);            // even count: lower middle
  CHECK(median_lower({4, 1, 3, 2}) == 2);
  CHECK(median_lower({5, 5, 5, 5, 5}) == 5);
  CHECK_THROWS_AS(median_lower({}), Error);
}

TEST_CASE("checkpoint selection is lexicographic with earliest-wins ties") {
  CHECK(select_checkpoint({{20, 1}, {10, 1}, {15, 1}}) == 1);
  CHECK(select_checkpoint({{10, 3}, {10, 2}, {10, 2}}) == 1);
  CHECK(select_checkpoint({{10, 2}, {10, 2}}) == 0);
  CHECK(select_checkpoint({{7, 9}}) == 0);
  CHECK_THROWS_AS(select_checkpoint({}), Error);
}

TEST_CASE("error aggregation matches hand-computed statistics") {
  std::vector<SampleError> errs(4);
  errs[0].rot_err_deg = 10;
  errs[1].rot_err_deg = 20;
  errs[2].rot_err_deg = 30;
  errs[3].rot_err_deg = 100;
  errs[0].trans_err_m = 0.1;
  errs[1].trans_err_m = 0.2;
  errs[2].trans_err_m = 0.3;
  errs[3].trans_err_m = 0.4;
  errs[0].class_correct = true;
  errs[1].class_correct = true;
  errs[2].class_correct = false;
  errs[3].class_correct = true;
  const GroupStat g = aggregate_errors(errs);
  CHECK(g.count == 4);
  CHECK(g.rot_mae_deg == doctest::Approx(40.0));
  CHECK(g.rot_medae_deg == doctest::Approx(20.0));  // lower median of 4
  CHECK(g.trans_mae_m == doctest::Approx(0.25));
  CHECK(g.trans_medae_m == doctest::Approx(0.2));
  CHECK(g.class_acc == doctest::Approx(0.75));
  CHECK(aggregate_errors({}).count == 0);
}

TEST_CASE("the reported rotation error is the true relative angle in degrees") {
  // The normalized angle is angle/pi, so scaling by 180 restores degrees.
  const Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
  const Eigen::Matrix3d b =
      Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  CHECK(relative_rotation_angle(a, b) * 180.0 == doctest::Approx(90.0).epsilon(1e-9));
  const Eigen::Matrix3d c = Eigen::AngleAxisd(M_PI, Eigen::Vector3d::UnitX()).toRotationMatrix();
  CHECK(relative_rotation_angle(a, c) * 180.0 == doctest::Approx(180.0).epsilon(1e-9));
}

TEST_CASE("adam steps move parameters against the gradient") {
  ModelConfig mc;
  mc.resolution = 32;
  mc.d = 8;
  mc.n_layers = 1;
  mc.n_heads = 2;
  mc.n_classes = 2;
  mc.dff = 16;
  mc.intrinsics = {64, 64, 16, 16};
  DroneKeyModel model(mc);
  AdamOptimizer opt(model);

  std::vector<Eigen::MatrixXf> grads;
  for (const auto& p : model.params()) {
    Eigen::MatrixXf g = Eigen::MatrixXf::Zero(model.tape().val(p.node).rows(),
                                              model.tape().val(p.node).cols());
    grads.push_back(g);
  }
  // Push a single known gradient: +1 on one entry of the first parameter.
  grads[0](0, 0) = 1.0f;
  const float before = model.tape().val(model.params()[0].node)(0, 0);
  opt.step(0.01, grads);
  const float after = model.tape().val(model.params()[0].node)(0, 0);
  // First Adam step has magnitude ~lr regardless of gradient scale.
  CHECK(after < before);
  CHECK(std::abs((before - after) - 0.01f) < 2e-3f);
  // Untouched entries stay put.
  CHECK(model.tape().val(model.params()[0].node)(0, 1) ==
        doctest::Approx(model.tape().val(model.params()[0].node)(0, 1)));
  CHECK(model.tape().val(model.params()[1].node)(0, 0) ==
        model.tape().val(model.params()[1].node)(0, 0));
}

TEST_CASE("two-epoch smoke training is deterministic and logged") {
  const std::string& data = desk_root();

  TempDir out_a("smoke_a"), out_b("smoke_b");
  TrainConfig cfg = desk_train_config(out_a.str());
  const TrainResult res = train(cfg, data);
  CHECK(res.log.size() == 2);
  CHECK(fs::exists(out_a.path / "train_log.jsonl"));
  CHECK(fs::exists(res.final_checkpoint));
  CHECK(fs::exists(res.best_checkpoint));
  CHECK(res.best_epoch >= 0);
  CHECK(res.best_epoch < 2);
  CHECK(res.log[0].lr == doctest::Approx(cfg.lr));
  CHECK(res.log[1].lr < cfg.lr);
  CHECK(std::isfinite(res.log[0].train_loss.l_total));
  CHECK(std::isfinite(res.log[1].val_rot_mae_deg));

  // One JSON record per epoch.
  std::ifstream log(out_a.path / "train_log.jsonl");
  int lines = 0;
  std::string line;
  while (std::getline(log, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 2);

  // Same config, fresh run: bit-identical final checkpoint.
  TrainConfig cfg_b = cfg;
  cfg_b.out_dir = out_b.str();
  const TrainResult res_b = train(cfg_b, data);
  CHECK(read_file(res.final_checkpoint) == read_file(res_b.final_checkpoint));
  CHECK(res_b.log[0].train_loss.l_total == res.log[0].train_loss.l_total);

  // Second epoch actually learns on this tiny set: loss drops.
  CHECK(res.log[1].train_loss.l_total < res.log[0].train_loss.l_total);

  // Evaluating the final checkpoint round-trips through the report writer.
  const EvaluationReport rep = evaluate_checkpoint(res.final_checkpoint, data, "valid");
  CHECK(rep.aggregate.count == 10);
  CHECK(rep.per_class.size() == 2);
  const auto rp = (out_a.path / "report.txt").string();
  const auto pp = (out_a.path / "per_sample.txt").string();
  write_report(rp, rep);
  write_per_sample_errors(pp, rep);
  CHECK(read_file(rp).find("rot_mae_deg") != std::string::npos);
  std::ifstream per(pp);
  lines = 0;
  while (std::getline(per, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 11);  // header + one row per sample
}

TEST_CASE("training refuses a missing split and mismatched checkpoints") {
  const std::string& data = desk_root();
  const DatasetManifest m = read_manifest(data + "/manifest");
  CHECK(load_split(data, m, "test").empty());  // desk preset has no test rows
  CHECK(load_split(data, m, "train").size() == 10);

  // Downstream consumers refuse the empty split.
  TempDir empty_out("empty");
  TrainConfig tc = desk_train_config(empty_out.str());
  CHECK_THROWS_AS(
      [&] {
        DroneKeyModel model(tc.model);
        const auto ck = (empty_out.path / "m.ckpt").string();
        save_checkpoint_data(ck, model.export_params());
        evaluate_checkpoint(ck, data, "test");
      }(),
      Error);

  // A checkpoint whose intrinsics disagree with the dataset is refused.
  TempDir dir("mismatch");
  ModelConfig mc = desk_train_config("unused").model;
  mc.intrinsics = {300, 300, 64, 64};
  DroneKeyModel model(mc);
  const auto ckpt = (dir.path / "m.ckpt").string();
  save_checkpoint_data(ckpt, model.export_params());
  CHECK_THROWS_AS(evaluate_checkpoint(ckpt, data, "valid"), ConfigError);

  ModelConfig bad_classes = desk_train_config("unused").model;
  bad_classes.n_classes = 5;
  DroneKeyModel model2(bad_classes);
  save_checkpoint_data(ckpt, model2.export_params());
  CHECK_THROWS_AS(evaluate_checkpoint(ckpt, data, "valid"), ConfigError);
}

TEST_CASE("exploding learning rate aborts with a diagnostic record") {
  const std::string& data = desk_root();
  TempDir out("nan");
  TrainConfig cfg = desk_train_config(out.str());
  cfg.lr = 1e30;
  CHECK_THROWS_AS(train(cfg, data), TrainingError);
  const std::string log = read_file(out.path / "train_log.jsonl");
  CHECK(log.find("nan_abort") != std::string::npos);
}

TEST_CASE("ground-truth baseline recovers poses almost exactly") {
  const EvaluationReport rep = run_baseline(desk_root(), "valid", "gt");
  CHECK(rep.aggregate.count == 10);
  // Annotation serialization carries six decimals; the solver should be well
  // under a thousandth of a degree and a tenth of a millimeter.
  CHECK(rep.aggregate.rot_mae_deg < 1e-3);
  CHECK(rep.aggregate.trans_mae_m < 1e-4);
  CHECK(rep.aggregate.class_acc == 1.0);
  CHECK_THROWS_AS(run_baseline(desk_root(), "valid", "bogus"), ConfigError);
}

TEST_CASE("throughput probe returns sane numbers") {
  ModelConfig mc;
  mc.resolution = 32;
  mc.d = 8;
  mc.n_layers = 1;
  mc.n_heads = 2;
  mc.n_classes = 2;
  mc.dff = 16;
  mc.intrinsics = {64, 64, 16, 16};
  DroneKeyModel model(mc);
  Image probe(32, 32);
  for (std::size_t i = 0; i < probe.data.size(); ++i)
    probe.data[i] = static_cast<std::uint8_t>(i % 251);
  const FpsResult r = measure_fps(model, probe, 20);
  CHECK(r.passes >= 100);  // floor kicks in
  CHECK(r.fps > 0);
  CHECK(r.median_ms > 0);
  CHECK(r.fps == doctest::Approx(1000.0 / r.median_ms).epsilon(1e-9));
  CHECK(!r.device_tag.empty());
}
