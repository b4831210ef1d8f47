#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dronekey/drone_specs.hpp"
#include "dronekey/errors.hpp"
#include "dronekey/geometry.hpp"
#include "dronekey/image.hpp"

namespace dronekey {

enum class MotionKind { kLinear, kNonLinear };

/// One scenario: a motion pattern rendered for every (class, background)
/// combination. z_min/z_max bound the trajectory depth band.
struct SceneConfig {
  std::string scene_id;
  MotionKind motion = MotionKind::kLinear;
  double duration = 4.0;  // seconds
  double fps = 30.0;
  std::vector<int> backgrounds;
  CameraIntrinsics camera;
  int width = 128, height = 128;
  double z_min = 2.0, z_max = 3.0;
  /// When positive, linear scenes draw the outer Euler endpoints inside
  /// [margin, 1-margin] so targets never straddle the circular wrap; the
  /// pose head's bounded outputs cannot cross it, so the smoke presets keep
  /// their rotations representable. Zero leaves full coverage.
  double rot_margin = 0.0;
  std::uint64_t rng_seed = 0;
  std::string split = "train";
};

/// Ground truth for one frame. keypoints_2d row k = projection of
/// keypoints_3d[k]; rotation is stored as a normalized Euler triple in the
/// canonical branch of matrix_to_euler_norm, so circular losses compare
/// like with like.
struct Annotation {
  int frame_index = 0;
  std::string scene_id;
  int class_id = 0;
  int background_id = 0;
  std::string split;
  CameraIntrinsics intrinsics;
  Eigen::Matrix<double, 4, 2> keypoints_2d;
  std::array<Eigen::Vector3d, 4> keypoints_3d;
  Eigen::Vector3d rot = Eigen::Vector3d::Zero();    // normalized Euler
  Eigen::Vector3d trans = Eigen::Vector3d::Zero();  // meters, camera frame
  Eigen::Vector4d bbox = Eigen::Vector4d::Zero();   // xmin ymin xmax ymax
};

struct Sample {
  Image image;
  Annotation ann;
};

/// One (scene, class, background) block of consecutive frames.
struct SequenceEntry {
  std::string scene_id;
  int class_id = 0;
  int background_id = 0;
  int frames = 0;
  std::string split;
  std::string dir;  // relative to the dataset root
};

struct DatasetManifest {
  int format_version = 1;
  int width = 0, height = 0;
  CameraIntrinsics intrinsics;
  std::uint64_t master_seed = 0;
  std::vector<DroneClassSpec> classes;
  std::vector<SceneConfig> scenes;
  std::vector<SequenceEntry> rows;

  long total_frames() const;
  /// Distinct (scene, class) pairs; backgrounds subdivide a sequence.
  int sequence_count() const;
  std::map<std::string, long> frames_per_split() const;
};

struct GenerationConfig {
  std::string out_dir;
  int width = 128, height = 128;
  CameraIntrinsics intrinsics{256, 256, 64, 64};
  std::uint64_t master_seed = 1234;
  std::vector<DroneClassSpec> classes;
  std::vector<SceneConfig> scenes;  // per-scene camera/size fields are overwritten from the above
  bool manifest_only = false;       // write the manifest but skip frame rendering
  bool overwrite = false;
};

/// 13-scene full composition: scenes 01-03 linear 4 s, 04-06 non-linear 4 s,
/// 07-09 linear 4 s, 10-13 non-linear 12 s, 30 fps, 3 backgrounds per scene,
/// 7 classes, 1920x1080. Totals 52,920 frames in 91 sequences.
GenerationConfig full_config(const std::string& out_dir, std::uint64_t seed = 1234);

/// Tiny smoke set: scenes 01 (train) and 03 (valid), 2 classes, 1 background
/// each, 1 s at 5 fps, 128x128. 20 frames total.
GenerationConfig desk_config(const std::string& out_dir, std::uint64_t seed = 1234);

/// Memorization set: scene 01 stretched to 20 s (200 train frames over
/// 2 classes) plus scene 03 at 4 s for validation (40 frames), 5 fps, 128x128.
GenerationConfig overfit_config(const std::string& out_dir, std::uint64_t seed = 1234);

/// train/valid/test assignment by scenario id: test {06,07},
/// valid {03,09,13}, train otherwise.
std::string split_for_scene(const std::string& scene_id);

/// Camera-frame poses at frame timestamps i/fps. Linear scenes interpolate
/// start/end positions at a fixed rotation rate; non-linear scenes follow
/// seeded Lissajous curves with oscillating rotation. The middle Euler
/// component stays within the canonical decomposition branch so stored
/// rotations vary smoothly. Depth stays within [z_min, z_max].
std::vector<RigidPose> synth_trajectory(const SceneConfig& cfg);

/// Euler triples matching synth_trajectory frame by frame (same seed and
/// formulas; euler_norm_to_matrix of entry i equals trajectory pose i).
std::vector<Eigen::Vector3d> synth_trajectory_euler(const SceneConfig& cfg);

/// Renders background plus class-colored body glyph, white nose marker, and
/// four color-coded propeller glyphs (front-left red, front-right green,
/// rear-left blue, rear-right yellow) so keypoint identity is recoverable
/// from appearance. Throws VisibilityError if any propeller has z <= 0.
Sample render_frame(const SceneConfig& cfg, const Eigen::Vector3d& rot_euler,
                    const Eigen::Vector3d& trans, const DroneClassSpec& spec, int frame_idx,
                    int background_id, std::uint64_t master_seed);

/// Writes <out>/manifest plus per-row frame files
/// <out>/<scene>/<class>/bg<k>/frame_%05d.{img,ann}. Refuses a non-empty
/// output directory unless cfg.overwrite. Deterministic: a second run with
/// the same config and seed produces byte-identical files.
DatasetManifest generate_dataset(const GenerationConfig& cfg);

/// The manifest generate_dataset would produce, without touching disk.
DatasetManifest build_manifest(const GenerationConfig& cfg);

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

void write_annotation(const std::string& path, const Annotation& a);
Annotation read_annotation(const std::string& path);

/// Global frame index over rows in manifest order. Throws Error when out of
/// range, LoadError when the files are absent.
Sample load_sample(const std::string& root, const DatasetManifest& m, long index);

/// Global indices belonging to a split, in manifest order.
std::vector<long> split_indices(const DatasetManifest& m, const std::string& split);

}  // namespace dronekey
