#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dronekey/analysis.hpp"
#include "dronekey/config.hpp"
#include "dronekey/dataset.hpp"
#include "dronekey/plot.hpp"
#include "dronekey/smoothing.hpp"
#include "dronekey/training.hpp"

namespace fs = std::filesystem;
using namespace dronekey;

namespace {

/// Flags shared by every subcommand. Flag values override config-file values,
/// which override built-in defaults; --set overrides sit between file and
/// flags.
struct CommonArgs {
  std::string config_path;
  std::string out = ".";
  std::uint64_t seed = 1234;
  bool seed_given = false;
  bool overwrite = false;
  std::vector<std::string> sets;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "key = value config file");
  sub->add_option("--out", args.out, "output directory");
  sub->add_option("--seed", args.seed, "master random seed")
      ->each([&args](const std::string&) { args.seed_given = true; });
  sub->add_flag("--overwrite", args.overwrite, "replace existing outputs");
  sub->add_option("--set", args.sets, "config override key=value")->type_size(1);
}

/// defaults -> config file -> --set -> --seed. Unknown keys are rejected
/// against `known` and the merged result is echoed to <out>/config.txt.
ConfigMap resolve_config(const CommonArgs& args, ConfigMap cfg,
                         const std::set<std::string>& known, bool echo = true) {
  if (!args.config_path.empty()) parse_config_file(args.config_path, cfg);
  for (const auto& s : args.sets) apply_override(cfg, s);
  if (args.seed_given || !cfg.has("seed")) cfg.set("seed", std::to_string(args.seed));
  cfg.require_known(known);
  if (echo) {
    fs::create_directories(args.out);
    write_config((fs::path(args.out) / "config.txt").string(), cfg);
  }
  return cfg;
}

std::string default_data_root(const ConfigMap& cfg) {
  if (cfg.has("data")) return cfg.get_str("data");
  if (const char* env = std::getenv("DRONEKEY_DATA")) return env;
  throw ConfigError("no dataset root: pass data=<dir> or set DRONEKEY_DATA");
}

ModelConfig model_config_from(const ConfigMap& cfg, const DatasetManifest& m) {
  ModelConfig mc;
  mc.resolution = m.width;
  mc.intrinsics = m.intrinsics;
  mc.n_classes = static_cast<int>(m.classes.size());
  mc.d = static_cast<int>(cfg.get_long("d", mc.d));
  mc.n_layers = static_cast<int>(cfg.get_long("layers", mc.n_layers));
  mc.n_heads = static_cast<int>(cfg.get_long("heads", mc.n_heads));
  mc.dff = static_cast<int>(cfg.get_long("dff", mc.dff));
  mc.decoder_config = static_cast<int>(cfg.get_long("decoder_config", mc.decoder_config));
  mc.encoder_enabled = cfg.get_bool("encoder", true);
  mc.class_onehot = cfg.get_bool("class_onehot", false);
  mc.init_seed = static_cast<std::uint64_t>(cfg.get_long("init_seed", 7));
  return mc;
}

void print_group(const std::string& kind, const std::string& name, const GroupStat& g) {
  std::printf("%s %s rot_mae_deg %.4f rot_medae_deg %.4f trans_mae_m %.4f trans_medae_m %.4f "
              "class_acc %.4f count %ld\n",
              kind.c_str(), name.c_str(), g.rot_mae_deg, g.rot_medae_deg, g.trans_mae_m,
              g.trans_medae_m, g.class_acc, g.count);
}

void write_reports(const std::string& out_dir, const EvaluationReport& rep) {
  fs::create_directories(out_dir);
  write_report((fs::path(out_dir) / "report.txt").string(), rep);
  write_per_sample_errors((fs::path(out_dir) / "per_sample.txt").string(), rep);
  print_group("aggregate", rep.split, rep.aggregate);
  for (const auto& [name, g] : rep.per_class) print_group("class", name, g);
}

/// Splits the per-sample list into per-sequence track files named
/// track_<scene>_c<class>_b<bg>.txt. Sample order inside a sequence follows
/// the frame order of the manifest.
void write_tracks(const std::string& out_dir, const EvaluationReport& rep,
                  const DatasetManifest& m) {
  std::map<std::string, PoseTrack> tracks;
  for (const auto& e : rep.per_sample) {
    const std::string key =
        "track_" + e.scene_id + "_c" + std::to_string(e.class_id) + "_b" +
        std::to_string(e.background_id);
    auto& track = tracks[key];
    if (track.points.empty())
      for (const auto& s : m.scenes)
        if (s.scene_id == e.scene_id) track.fps = s.fps;
    TrackPoint p;
    p.r = e.pred_r;
    p.t = e.pred_t;
    track.points.push_back(p);
  }
  for (const auto& [key, track] : tracks)
    write_track((fs::path(out_dir) / (key + ".txt")).string(), track);
  std::printf("tracks %zu\n", tracks.size());
}

int cmd_gen(const CommonArgs& args) {
  ConfigMap defaults;
  defaults.set("preset", "desk");
  defaults.set("manifest_only", "false");
  const ConfigMap cfg =
      resolve_config(args, defaults, {"preset", "manifest_only", "seed"}, false);

  const std::string preset = cfg.get_str("preset");
  const auto seed = static_cast<std::uint64_t>(cfg.get_long("seed"));
  GenerationConfig gen;
  if (preset == "full")
    gen = full_config(args.out, seed);
  else if (preset == "desk")
    gen = desk_config(args.out, seed);
  else if (preset == "overfit")
    gen = overfit_config(args.out, seed);
  else
    throw ConfigError("unknown preset '" + preset + "' (full, desk, overfit)");
  gen.manifest_only = cfg.get_bool("manifest_only");
  gen.overwrite = args.overwrite;

  const DatasetManifest m = generate_dataset(gen);
  write_config((fs::path(args.out) / "config.txt").string(), cfg);
  std::printf("preset %s\n", preset.c_str());
  std::printf("frames %ld\n", m.total_frames());
  std::printf("sequences %d\n", m.sequence_count());
  for (const auto& [split, count] : m.frames_per_split())
    std::printf("split %s %ld\n", split.c_str(), count);
  return 0;
}

int cmd_train(const CommonArgs& args) {
  ConfigMap defaults;
  defaults.set("lr", "0.00001");
  defaults.set("batch", "32");
  defaults.set("epochs", "100");
  defaults.set("strategy", "equal");
  defaults.set("shuffle", "true");
  const ConfigMap cfg = resolve_config(
      args, defaults,
      {"data", "lr", "batch", "epochs", "strategy", "shuffle", "seed", "d", "layers", "heads",
       "dff", "decoder_config", "encoder", "class_onehot", "init_seed"});

  const std::string root = default_data_root(cfg);
  const DatasetManifest m = read_manifest((fs::path(root) / "manifest").string());
  TrainConfig tc;
  tc.lr = cfg.get_double("lr");
  tc.batch_size = static_cast<int>(cfg.get_long("batch"));
  tc.epochs = static_cast<int>(cfg.get_long("epochs"));
  tc.seed = static_cast<std::uint64_t>(cfg.get_long("seed"));
  tc.strategy = parse_strategy(cfg.get_str("strategy"));
  tc.shuffle = cfg.get_bool("shuffle");
  tc.model = model_config_from(cfg, m);
  tc.out_dir = args.out;

  const TrainResult result = train(tc, root);
  std::printf("epochs %zu\n", result.log.size());
  std::printf("best_epoch %d\n", result.best_epoch);
  std::printf("best_val_rot_mae_deg %.4f\n", result.best_val_rot_mae_deg);
  std::printf("best_val_trans_mae_m %.4f\n", result.best_val_trans_mae_m);
  std::printf("best_checkpoint %s\n", result.best_checkpoint.c_str());
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  ConfigMap defaults;
  defaults.set("split", "test");
  defaults.set("tracks", "false");
  const ConfigMap cfg =
      resolve_config(args, defaults, {"data", "ckpt", "split", "tracks", "seed"});
  const std::string root = default_data_root(cfg);
  const std::string ckpt = cfg.get_str("ckpt");
  if (!fs::exists(ckpt)) throw LoadError("checkpoint not found: " + ckpt);
  const EvaluationReport rep = evaluate_checkpoint(ckpt, root, cfg.get_str("split"));
  write_reports(args.out, rep);
  if (cfg.get_bool("tracks"))
    write_tracks(args.out, rep, read_manifest((fs::path(root) / "manifest").string()));
  return 0;
}

int cmd_baseline(const CommonArgs& args) {
  ConfigMap defaults;
  defaults.set("split", "test");
  defaults.set("source", "gt");
  defaults.set("tracks", "false");
  const ConfigMap cfg =
      resolve_config(args, defaults, {"data", "split", "source", "ckpt", "tracks", "seed"});
  const std::string root = default_data_root(cfg);
  const EvaluationReport rep =
      run_baseline(root, cfg.get_str("split"), cfg.get_str("source"), cfg.get_str("ckpt", ""));
  write_reports(args.out, rep);
  if (cfg.get_bool("tracks"))
    write_tracks(args.out, rep, read_manifest((fs::path(root) / "manifest").string()));
  return 0;
}

int cmd_smooth(const CommonArgs& args) {
  ConfigMap defaults;
  defaults.set("sigma", "2");
  const ConfigMap cfg = resolve_config(args, defaults, {"in", "sigma", "seed"});
  const std::string in = cfg.get_str("in");
  const PoseTrack smoothed = gaussian_smooth_track(read_track(in), cfg.get_double("sigma"));
  const std::string out_path =
      (fs::path(args.out) / ("smoothed_" + fs::path(in).filename().string())).string();
  write_track(out_path, smoothed);
  std::printf("smoothed %s\n", out_path.c_str());
  return 0;
}

int cmd_plot(const CommonArgs& args, const std::vector<std::string>& track_files) {
  ConfigMap defaults;
  defaults.set("scatter", "");
  const ConfigMap cfg = resolve_config(args, defaults, {"scatter", "seed"});
  int written = 0;
  for (const auto& file : track_files) {
    const Image img = plot_track(read_track(file));
    const std::string out_path =
        (fs::path(args.out) / (fs::path(file).stem().string() + ".ppm")).string();
    write_ppm(out_path, img);
    std::printf("plot %s\n", out_path.c_str());
    ++written;
  }
  const std::string scatter = cfg.get_str("scatter");
  if (!scatter.empty()) {
    const Image img = plot_scatter(read_projection(scatter));
    const std::string out_path =
        (fs::path(args.out) / (fs::path(scatter).stem().string() + ".ppm")).string();
    write_ppm(out_path, img);
    std::printf("plot %s\n", out_path.c_str());
    ++written;
  }
  if (written == 0) throw ConfigError("nothing to plot: pass track files or scatter=<file>");
  return 0;
}

int cmd_analyze(const CommonArgs& args, std::vector<std::string> roots) {
  ConfigMap defaults;
  defaults.set("limit", "400");
  const ConfigMap cfg = resolve_config(args, defaults, {"limit", "seed"});
  if (roots.empty()) {
    if (const char* env = std::getenv("DRONEKEY_DATA")) roots.push_back(env);
    else throw ConfigError("analyze needs at least one dataset root");
  }
  const long limit = cfg.get_long("limit");
  if (limit < 1) throw ConfigError("limit must be >= 1");

  FeatureCloud cloud;
  for (const auto& root : roots) {
    const DatasetManifest m = read_manifest((fs::path(root) / "manifest").string());
    const long total = m.total_frames();
    const long stride = std::max(1L, total / limit);
    std::vector<Image> images;
    for (long i = 0; i < total && static_cast<long>(images.size()) < limit; i += stride)
      images.push_back(load_sample(root, m, i).image);
    std::string label = fs::path(root).filename().string();
    if (label.empty()) label = fs::path(root).parent_path().filename().string();
    append_cloud(cloud, extract_image_features(images, label));
  }
  const PcaResult pca = pca_project(cloud);
  const std::string proj_path = (fs::path(args.out) / "projection.txt").string();
  write_projection(proj_path, pca);
  write_ppm((fs::path(args.out) / "scatter.ppm").string(), plot_scatter(pca));
  std::printf("samples %ld\n", static_cast<long>(pca.points.rows()));
  std::printf("explained %.4f %.4f\n", pca.explained_variance[0], pca.explained_variance[1]);
  std::printf("projection %s\n", proj_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dronekey: monocular drone pose estimation toolkit"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, baseline_args, smooth_args, plot_args,
      analyze_args;
  std::vector<std::string> plot_tracks, analyze_roots;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  add_common(gen, gen_args);
  std::string gen_preset;
  bool gen_manifest_only = false;
  gen->add_option("--preset", gen_preset, "full, desk, or overfit");
  gen->add_flag("--manifest-only", gen_manifest_only, "write the manifest without frames");

  auto* train = app.add_subcommand("train", "train the pose model");
  add_common(train, train_args);
  std::string train_data;
  long train_epochs = -1;
  train->add_option("--data", train_data, "dataset root");
  train->add_option("--epochs", train_epochs, "training epochs");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_args);
  std::string eval_data, eval_ckpt, eval_split;
  eval->add_option("--data", eval_data, "dataset root");
  eval->add_option("--ckpt", eval_ckpt, "checkpoint path");
  eval->add_option("--split", eval_split, "train, valid, or test");

  auto* baseline = app.add_subcommand("baseline", "keypoints + PnP baseline");
  add_common(baseline, baseline_args);
  std::string baseline_data, baseline_source, baseline_split, baseline_ckpt;
  baseline->add_option("--data", baseline_data, "dataset root");
  baseline->add_option("--source", baseline_source, "keypoint source: gt or encoder");
  baseline->add_option("--split", baseline_split, "train, valid, or test");
  baseline->add_option("--ckpt", baseline_ckpt, "checkpoint for source=encoder");

  auto* smooth = app.add_subcommand("smooth", "Gaussian-smooth a pose track");
  add_common(smooth, smooth_args);
  std::string smooth_in;
  double smooth_sigma = -1;
  smooth->add_option("--in", smooth_in, "input track file");
  smooth->add_option("--sigma", smooth_sigma, "kernel width in frames");

  auto* plot = app.add_subcommand("plot", "render tracks and scatter files");
  add_common(plot, plot_args);
  std::string plot_scatter_file;
  plot->add_option("tracks", plot_tracks, "track files to plot");
  plot->add_option("--scatter", plot_scatter_file, "projection file to plot");

  auto* analyze = app.add_subcommand("analyze", "feature PCA over datasets");
  add_common(analyze, analyze_args);
  analyze->add_option("roots", analyze_roots, "dataset roots to compare");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      if (!gen_preset.empty()) gen_args.sets.push_back("preset=" + gen_preset);
      if (gen_manifest_only) gen_args.sets.push_back("manifest_only=true");
      return cmd_gen(gen_args);
    }
    if (train->parsed()) {
      if (!train_data.empty()) train_args.sets.push_back("data=" + train_data);
      if (train_epochs >= 0) train_args.sets.push_back("epochs=" + std::to_string(train_epochs));
      return cmd_train(train_args);
    }
    if (eval->parsed()) {
      if (!eval_data.empty()) eval_args.sets.push_back("data=" + eval_data);
      if (!eval_ckpt.empty()) eval_args.sets.push_back("ckpt=" + eval_ckpt);
      if (!eval_split.empty()) eval_args.sets.push_back("split=" + eval_split);
      return cmd_eval(eval_args);
    }
    if (baseline->parsed()) {
      if (!baseline_data.empty()) baseline_args.sets.push_back("data=" + baseline_data);
      if (!baseline_source.empty()) baseline_args.sets.push_back("source=" + baseline_source);
      if (!baseline_split.empty()) baseline_args.sets.push_back("split=" + baseline_split);
      if (!baseline_ckpt.empty()) baseline_args.sets.push_back("ckpt=" + baseline_ckpt);
      return cmd_baseline(baseline_args);
    }
    if (smooth->parsed()) {
      if (!smooth_in.empty()) smooth_args.sets.push_back("in=" + smooth_in);
      if (smooth_sigma > 0)
        smooth_args.sets.push_back("sigma=" + std::to_string(smooth_sigma));
      return cmd_smooth(smooth_args);
    }
    if (plot->parsed()) {
      if (!plot_scatter_file.empty())
        plot_args.sets.push_back("scatter=" + plot_scatter_file);
      return cmd_plot(plot_args, plot_tracks);
    }
    if (analyze->parsed()) return cmd_analyze(analyze_args, analyze_roots);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
