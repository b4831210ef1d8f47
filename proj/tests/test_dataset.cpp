#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dronekey/dataset.hpp"
#include "dronekey/rng.hpp"

using namespace dronekey;
namespace fs = std::filesystem;

namespace {

/// Unique scratch directory, removed on scope exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("dronekey_test_" + tag + "_" + std::to_string(::getpid()));
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

}  // namespace

TEST_CASE("split assignment by scenario id") {
  CHECK(split_for_scene("06") == "test");
  CHECK(split_for_scene("07") == "test");
  CHECK(split_for_scene("03") == "valid");
  CHECK(split_for_scene("09") == "valid");
  CHECK(split_for_scene("13") == "valid");
  for (const auto* id : {"01", "02", "04", "05", "08", "10", "11", "12"})
    CHECK(split_for_scene(id) == "train");
}

TEST_CASE("full-composition manifest arithmetic") {
  const DatasetManifest m = build_manifest(full_config("unused"));
  CHECK(m.total_frames() == 52920);
  CHECK(m.sequence_count() == 91);
  CHECK(m.rows.size() == 273);  // 13 scenes x 7 classes x 3 backgrounds
  const auto per_split = m.frames_per_split();
  CHECK(per_split.at("train") == 35280);
  CHECK(per_split.at("valid") == 12600);
  CHECK(per_split.at("test") == 5040);
  CHECK(m.width == 1920);
  CHECK(m.height == 1080);
  CHECK(m.classes.size() == 7);
  for (std::size_t i = 1; i < m.classes.size(); ++i)
    CHECK(m.classes[i].body_extent > m.classes[i - 1].body_extent);
}

TEST_CASE("desk preset composition") {
  const DatasetManifest m = build_manifest(desk_config("unused"));
  CHECK(m.total_frames() == 20);
  CHECK(m.sequence_count() == 4);
  CHECK(m.width == 128);
  CHECK(m.height == 128);
  CHECK(m.classes.size() == 2);
  const auto per_split = m.frames_per_split();
  CHECK(per_split.at("train") == 10);
  CHECK(per_split.at("valid") == 10);
  CHECK(per_split.count("test") == 0);
}

TEST_CASE("overfit preset stretches the desk scenes") {
  const DatasetManifest m = build_manifest(overfit_config("unused"));
  CHECK(m.total_frames() == 240);
  const auto per_split = m.frames_per_split();
  CHECK(per_split.at("train") == 200);
  CHECK(per_split.at("valid") == 40);
}

TEST_CASE("trajectories stay in the depth band and match their Euler form") {
  for (const auto& cfg : full_config("unused").scenes) {
    if (cfg.scene_id != "01" && cfg.scene_id != "05" && cfg.scene_id != "10") continue;
    const auto poses = synth_trajectory(cfg);
    const auto eulers = synth_trajectory_euler(cfg);
    REQUIRE(poses.size() == static_cast<std::size_t>(cfg.duration * cfg.fps));
    REQUIRE(eulers.size() == poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) {
      CHECK(poses[i].translation.z() >= cfg.z_min - 1e-9);
      CHECK(poses[i].translation.z() <= cfg.z_max + 1e-9);
      CHECK(poses[i].translation.z() > 0.5);
      CHECK((euler_norm_to_matrix(eulers[i]) - poses[i].rotation).norm() < 1e-9);
      // Middle component stays on the principal decomposition branch.
      const double b = eulers[i][1];
      CHECK((b <= 0.25 || b >= 0.75));
    }
  }
}

TEST_CASE("rendered frames and annotations agree with projection") {
  TempDir dir("desk_gen");
  auto cfg = desk_config(dir.str());
  const DatasetManifest m = generate_dataset(cfg);
  CHECK(fs::exists(dir.path / "manifest"));
  const auto indices = split_indices(m, "train");
  REQUIRE(indices.size() == 10);
  for (const long idx : indices) {
    const Sample s = load_sample(dir.str(), m, idx);
    CHECK(s.image.width == m.width);
    CHECK(s.image.height == m.height);
    const Eigen::Matrix3d r = euler_norm_to_matrix(s.ann.rot);
    const auto layout = square_layout(m.classes.at(s.ann.class_id).body_extent);
    for (int k = 0; k < 4; ++k) {
      // 3D keypoints live in the camera frame; their direct projection must
      // re-land on the stored pixels. Annotations hold six decimals, so the
      // half-pixel band is generous.
      const Eigen::Vector2d px = project_point(m.intrinsics, s.ann.keypoints_3d[k]);
      CHECK((px - s.ann.keypoints_2d.row(k).transpose()).norm() < 0.5);
      // And they must equal the posed body-frame layout.
      const Eigen::Vector3d posed = r * layout[k] + s.ann.trans;
      CHECK((posed - s.ann.keypoints_3d[k]).norm() < 1e-4);
      CHECK(s.ann.keypoints_2d(k, 0) >= s.ann.bbox[0]);
      CHECK(s.ann.keypoints_2d(k, 1) >= s.ann.bbox[1]);
      CHECK(s.ann.keypoints_2d(k, 0) <= s.ann.bbox[2]);
      CHECK(s.ann.keypoints_2d(k, 1) <= s.ann.bbox[3]);
    }
    CHECK(s.ann.split == "train");
  }
}

TEST_CASE("regeneration with the same seed is byte-identical") {
  TempDir a("regen_a"), b("regen_b");
  generate_dataset(desk_config(a.str(), 99));
  generate_dataset(desk_config(b.str(), 99));
  CHECK(read_file(a.path / "manifest") == read_file(b.path / "manifest"));
  const auto frame = fs::path("01") / "Mini3" / "bg0" / "frame_00003";
  CHECK(read_file(a.path / (frame.string() + ".img")) ==
        read_file(b.path / (frame.string() + ".img")));
  CHECK(read_file(a.path / (frame.string() + ".ann")) ==
        read_file(b.path / (frame.string() + ".ann")));

  TempDir c("regen_c");
  generate_dataset(desk_config(c.str(), 100));
  CHECK(read_file(a.path / (frame.string() + ".img")) !=
        read_file(c.path / (frame.string() + ".img")));
}

TEST_CASE("generation refuses a dirty output directory") {
  TempDir dir("dirty");
  std::ofstream(dir.path / "stale.txt") << "x";
  auto cfg = desk_config(dir.str());
  cfg.manifest_only = true;
  CHECK_THROWS_AS(generate_dataset(cfg), Error);
  cfg.overwrite = true;
  CHECK_NOTHROW(generate_dataset(cfg));
}

TEST_CASE("annotation io round-trips byte-stably") {
  TempDir dir("ann_io");
  Rng rng(5);
  Annotation a;
  a.frame_index = 17;
  a.scene_id = "05";
  a.class_id = 3;
  a.background_id = 2;
  a.split = "train";
  a.intrinsics = {1000, 1000, 960, 540};
  for (int k = 0; k < 4; ++k) {
    a.keypoints_2d(k, 0) = rng.uniform(0.0, 1920.0);
    a.keypoints_2d(k, 1) = rng.uniform(0.0, 1080.0);
    a.keypoints_3d[k] = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0};
  }
  a.rot = {rng.uniform(), rng.uniform(), rng.uniform()};
  a.trans = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(2.0, 6.0)};
  a.bbox = {10.0, 20.0, 400.0, 300.0};

  const auto p1 = (dir.path / "a.ann").string();
  const auto p2 = (dir.path / "b.ann").string();
  write_annotation(p1, a);
  const Annotation back = read_annotation(p1);
  write_annotation(p2, back);
  CHECK(read_file(p1) == read_file(p2));
  CHECK(back.scene_id == a.scene_id);
  CHECK(back.class_id == a.class_id);
  CHECK((back.trans - a.trans).norm() < 1e-5);
}

TEST_CASE("manifest io round-trips") {
  TempDir dir("man_io");
  const DatasetManifest m = build_manifest(desk_config("unused", 321));
  const auto p1 = (dir.path / "m1").string();
  const auto p2 = (dir.path / "m2").string();
  write_manifest(p1, m);
  write_manifest(p2, read_manifest(p1));
  CHECK(read_file(p1) == read_file(p2));
  const DatasetManifest back = read_manifest(p1);
  CHECK(back.total_frames() == m.total_frames());
  CHECK(back.master_seed == m.master_seed);
  CHECK(back.classes.size() == m.classes.size());
}

TEST_CASE("malformed manifests report the offending line") {
  TempDir dir("man_bad");
  const auto path = (dir.path / "manifest").string();
  write_manifest(path, build_manifest(desk_config("unused")));
  auto text = read_file(path);
  const auto pos = text.find("intrinsics");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 10, "intrinsicz");
  std::ofstream(path, std::ios::binary) << text;
  try {
    read_manifest(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("image io round-trips and rejects junk") {
  TempDir dir("img_io");
  Image img(9, 5);
  Rng rng(8);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  const auto path = (dir.path / "t.img").string();
  write_ppm(path, img);
  const Image back = read_ppm(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.data == img.data);

  std::ofstream(dir.path / "junk.img", std::ios::binary) << "P5 1 1 255 \0";
  CHECK_THROWS_AS(read_ppm((dir.path / "junk.img").string()), LoadError);
  CHECK_THROWS_AS(read_ppm((dir.path / "absent.img").string()), LoadError);
}

TEST_CASE("load_sample bounds and split indexing") {
  TempDir dir("bounds");
  const DatasetManifest m = generate_dataset(desk_config(dir.str()));
  CHECK_THROWS_AS(load_sample(dir.str(), m, -1), Error);
  CHECK_THROWS_AS(load_sample(dir.str(), m, m.total_frames()), Error);
  const auto train = split_indices(m, "train");
  const auto valid = split_indices(m, "valid");
  CHECK(train.size() + valid.size() == static_cast<std::size_t>(m.total_frames()));
  CHECK(split_indices(m, "test").empty());
}

TEST_CASE("rendering a pose behind the camera fails loudly") {
  auto cfg = desk_config("unused");
  const auto& scene = cfg.scenes.at(0);
  SceneConfig sc = scene;
  sc.camera = cfg.intrinsics;
  sc.width = cfg.width;
  sc.height = cfg.height;
  CHECK_THROWS_AS(
      render_frame(sc, {0, 0, 0}, {0, 0, -2.0}, cfg.classes.at(0), 0, 0, cfg.master_seed),
      VisibilityError);
}

TEST_CASE("derived seeds differ across streams") {
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(fnv1a("01") != fnv1a("02"));
}
