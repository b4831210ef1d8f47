#include "dronekey/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dronekey/rng.hpp"

namespace fs = std::filesystem;

namespace dronekey {

namespace {

constexpr std::uint64_t kTrajStream = 0xA11CEULL;
constexpr std::uint64_t kBackgroundStream = 0xB6ULL;

const std::uint8_t kPropColors[4][3] = {
    {240, 40, 40},   // front-left
    {40, 230, 40},   // front-right
    {50, 80, 240},   // rear-left
    {245, 210, 30},  // rear-right
};
const std::uint8_t kClassColors[7][3] = {
    {150, 60, 120}, {60, 120, 150}, {160, 110, 50}, {90, 140, 70},
    {130, 70, 160}, {70, 150, 130}, {150, 150, 90},
};

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::uint64_t trajectory_seed(std::uint64_t master, const std::string& scene_id, int class_id) {
  return derive_seed(master, fnv1a(scene_id), static_cast<std::uint64_t>(class_id), kTrajStream);
}

double lateral_limit(const SceneConfig& cfg) {
  const double half_fov = std::min(cfg.camera.cx / cfg.camera.fx, cfg.camera.cy / cfg.camera.fy);
  return 0.45 * cfg.z_min * half_fov;
}

struct TrajPoint {
  Eigen::Vector3d euler;
  Eigen::Vector3d pos;
};

std::vector<TrajPoint> synth_impl(const SceneConfig& cfg) {
  const int n = static_cast<int>(std::lround(cfg.duration * cfg.fps));
  if (n <= 0) throw ConfigError("scene " + cfg.scene_id + " has no frames (duration*fps <= 0)");
  Rng rng(cfg.rng_seed);
  const double lat = lateral_limit(cfg);
  const double zr = cfg.z_max - cfg.z_min;
  std::vector<TrajPoint> out(n);

  if (cfg.motion == MotionKind::kLinear) {
    const double x0 = rng.uniform(-lat, lat), x1 = rng.uniform(-lat, lat);
    const double y0 = rng.uniform(-lat, lat), y1 = rng.uniform(-lat, lat);
    const double z0 = rng.uniform(cfg.z_min + 0.05 * zr, cfg.z_max - 0.05 * zr);
    const double z1 = rng.uniform(cfg.z_min + 0.05 * zr, cfg.z_max - 0.05 * zr);
    double r0b, r2b, w0, w2, r1b, w1;
    if (cfg.rot_margin > 0) {
      // Endpoint interpolation inside the band keeps every frame's target in
      // [margin, 1-margin]; the middle component stays on the positive side
      // of its canonical branch so it never straddles the wrap either.
      const double m = cfg.rot_margin;
      r0b = rng.uniform(m, 1 - m);
      w0 = (rng.uniform(m, 1 - m) - r0b) / cfg.duration;
      r2b = rng.uniform(m, 1 - m);
      w2 = (rng.uniform(m, 1 - m) - r2b) / cfg.duration;
      r1b = rng.uniform(0.03, 0.15);
      w1 = (rng.uniform(0.03, 0.15) - r1b) / cfg.duration;
    } else {
      r0b = rng.uniform();
      r2b = rng.uniform();
      w0 = rng.uniform(-0.4, 0.4) / cfg.duration;
      w2 = rng.uniform(-0.4, 0.4) / cfg.duration;
      // Middle component stays inside (-0.2, 0.2) turns: the canonical branch
      // of the Euler decomposition, clear of gimbal lock.
      r1b = rng.uniform(-0.12, 0.12);
      w1 = rng.uniform(-0.08, 0.08) / cfg.duration;
    }
    for (int i = 0; i < n; ++i) {
      const double t = i / cfg.fps;
      const double s = t / cfg.duration;
      out[i].pos = {x0 + (x1 - x0) * s, y0 + (y1 - y0) * s, z0 + (z1 - z0) * s};
      out[i].euler = {wrap01(r0b + w0 * t), wrap01(r1b + w1 * t), wrap01(r2b + w2 * t)};
    }
  } else {
    const double ax = rng.uniform(0.3, 1.0) * lat, fx = rng.uniform(0.15, 0.45),
                 px = rng.uniform(0, 2 * M_PI);
    const double ay = rng.uniform(0.3, 1.0) * lat, fy = rng.uniform(0.15, 0.45),
                 py = rng.uniform(0, 2 * M_PI);
    const double zc = 0.5 * (cfg.z_min + cfg.z_max);
    const double az = rng.uniform(0.15, 0.45) * (zr / 2.0), fz = rng.uniform(0.15, 0.45),
                 pz = rng.uniform(0, 2 * M_PI);
    double base[3], amp[3], frq[3], phs[3], drift[3];
    for (int j = 0; j < 3; ++j) {
      base[j] = (j == 1) ? rng.uniform(-0.1, 0.1) : rng.uniform();
      amp[j] = (j == 1) ? rng.uniform(0.02, 0.08) : rng.uniform(0.05, 0.2);
      frq[j] = rng.uniform(0.1, 0.4);
      phs[j] = rng.uniform(0, 2 * M_PI);
      drift[j] = (j == 1) ? 0.0 : rng.uniform(-0.3, 0.3) / cfg.duration;
    }
    for (int i = 0; i < n; ++i) {
      const double t = i / cfg.fps;
      out[i].pos = {ax * std::sin(2 * M_PI * fx * t + px), ay * std::sin(2 * M_PI * fy * t + py),
                    zc + az * std::sin(2 * M_PI * fz * t + pz)};
      for (int j = 0; j < 3; ++j)
        out[i].euler[j] = wrap01(base[j] + amp[j] * std::sin(2 * M_PI * frq[j] * t + phs[j]) +
                                 drift[j] * t);
    }
  }
  return out;
}

struct BackgroundParams {
  double amp[3], fu[3], fv[3], phase[3];
};

BackgroundParams background_params(std::uint64_t master, int background_id) {
  Rng rng(derive_seed(master, kBackgroundStream, static_cast<std::uint64_t>(background_id)));
  BackgroundParams p;
  for (int c = 0; c < 3; ++c) {
    p.amp[c] = rng.uniform(0.12, 0.25);
    p.fu[c] = rng.uniform(0.5, 3.0);
    p.fv[c] = rng.uniform(0.5, 3.0);
    p.phase[c] = rng.uniform(0, 2 * M_PI);
  }
  return p;
}

void fill_background(Image& img, const BackgroundParams& p, std::uint64_t master,
                     int background_id) {
  const std::uint64_t texseed =
      derive_seed(master, kBackgroundStream, static_cast<std::uint64_t>(background_id), 7);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const std::uint64_t h =
          splitmix64(texseed ^ (static_cast<std::uint64_t>(x) * 0x9E3779B97F4A7C15ULL +
                                static_cast<std::uint64_t>(y) * 0xC2B2AE3D27D4EB4FULL));
      const double noise = static_cast<double>(h >> 11) * 0x1.0p-53 - 0.5;
      auto* px = img.px(x, y);
      for (int c = 0; c < 3; ++c) {
        const double wave = std::sin(
            2 * M_PI * (p.fu[c] * x / img.width + p.fv[c] * y / img.height) + p.phase[c]);
        const double v = 0.45 + p.amp[c] * wave + 0.12 * noise;
        px[c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0);
      }
    }
  }
}

void fill_circle(Image& img, double cx, double cy, double radius, const std::uint8_t rgb[3]) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r2) img.set(x, y, rgb[0], rgb[1], rgb[2]);
    }
}

void write_counted(std::ofstream& f, const char* key, const double* v, int n) {
  f << key;
  for (int i = 0; i < n; ++i) f << " " << fmt6(v[i]);
  f << "\n";
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line_no, "expected a number, got '" + s + "'");
  }
}

long parse_long(const std::string& s, int line_no) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line_no, "expected an integer, got '" + s + "'");
  }
}

}  // namespace

long DatasetManifest::total_frames() const {
  long n = 0;
  for (const auto& r : rows) n += r.frames;
  return n;
}

int DatasetManifest::sequence_count() const {
  std::vector<std::pair<std::string, int>> seen;
  for (const auto& r : rows) {
    std::pair<std::string, int> key{r.scene_id, r.class_id};
    if (std::find(seen.begin(), seen.end(), key) == seen.end()) seen.push_back(key);
  }
  return static_cast<int>(seen.size());
}

std::map<std::string, long> DatasetManifest::frames_per_split() const {
  std::map<std::string, long> out;
  for (const auto& r : rows) out[r.split] += r.frames;
  return out;
}

std::string split_for_scene(const std::string& scene_id) {
  if (scene_id == "06" || scene_id == "07") return "test";
  if (scene_id == "03" || scene_id == "09" || scene_id == "13") return "valid";
  return "train";
}

GenerationConfig full_config(const std::string& out_dir, std::uint64_t seed) {
  GenerationConfig cfg;
  cfg.out_dir = out_dir;
  cfg.width = 1920;
  cfg.height = 1080;
  cfg.intrinsics = {1000, 1000, 960, 540};
  cfg.master_seed = seed;
  cfg.classes = default_class_specs();
  for (int i = 1; i <= 13; ++i) {
    SceneConfig s;
    char id[8];
    std::snprintf(id, sizeof(id), "%02d", i);
    s.scene_id = id;
    s.motion = (i <= 3 || (i >= 7 && i <= 9)) ? MotionKind::kLinear : MotionKind::kNonLinear;
    s.duration = (i >= 10) ? 12.0 : 4.0;
    s.fps = 30.0;
    s.backgrounds = {3 * (i - 1), 3 * (i - 1) + 1, 3 * (i - 1) + 2};
    s.z_min = 3.5;
    s.z_max = 6.5;
    s.split = split_for_scene(s.scene_id);
    cfg.scenes.push_back(std::move(s));
  }
  return cfg;
}

GenerationConfig desk_config(const std::string& out_dir, std::uint64_t seed) {
  GenerationConfig cfg;
  cfg.out_dir = out_dir;
  cfg.width = 128;
  cfg.height = 128;
  cfg.intrinsics = {256, 256, 64, 64};
  cfg.master_seed = seed;
  auto all = default_class_specs();
  cfg.classes = {all[0], all[1]};
  for (const char* id : {"01", "03"}) {
    SceneConfig s;
    s.scene_id = id;
    s.motion = MotionKind::kLinear;
    s.duration = 1.0;
    s.fps = 5.0;
    s.backgrounds = {id[1] - '1'};  // scene 01 -> bg 0, scene 03 -> bg 2
    s.z_min = 2.0;
    s.z_max = 3.0;
    s.rot_margin = 0.15;
    s.split = split_for_scene(id);
    cfg.scenes.push_back(std::move(s));
  }
  return cfg;
}

GenerationConfig overfit_config(const std::string& out_dir, std::uint64_t seed) {
  GenerationConfig cfg = desk_config(out_dir, seed);
  cfg.scenes[0].duration = 20.0;  // 100 frames per class in the train scene
  cfg.scenes[1].duration = 4.0;   // 20 frames per class for validation
  return cfg;
}

std::vector<RigidPose> synth_trajectory(const SceneConfig& cfg) {
  auto pts = synth_impl(cfg);
  std::vector<RigidPose> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i)
    out[i] = {euler_norm_to_matrix(pts[i].euler), pts[i].pos};
  return out;
}

std::vector<Eigen::Vector3d> synth_trajectory_euler(const SceneConfig& cfg) {
  auto pts = synth_impl(cfg);
  std::vector<Eigen::Vector3d> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) out[i] = pts[i].euler;
  return out;
}

Sample render_frame(const SceneConfig& cfg, const Eigen::Vector3d& rot_euler,
                    const Eigen::Vector3d& trans, const DroneClassSpec& spec, int frame_idx,
                    int background_id, std::uint64_t master_seed) {
  const RigidPose pose{euler_norm_to_matrix(rot_euler), trans};
  std::vector<Eigen::Vector3d> layout(spec.propeller_layout.begin(), spec.propeller_layout.end());
  const auto kp3d = transform_points(pose, layout);
  for (const auto& p : kp3d)
    if (p.z() <= 0)
      throw VisibilityError("propeller behind camera in scene " + cfg.scene_id + " frame " +
                            std::to_string(frame_idx));

  Sample s;
  s.ann.frame_index = frame_idx;
  s.ann.scene_id = cfg.scene_id;
  s.ann.class_id = spec.class_id;
  s.ann.background_id = background_id;
  s.ann.split = cfg.split;
  s.ann.intrinsics = cfg.camera;
  for (int k = 0; k < 4; ++k) {
    s.ann.keypoints_3d[k] = kp3d[k];
    const auto px = project_point(cfg.camera, kp3d[k]);
    s.ann.keypoints_2d(k, 0) = px.x();
    s.ann.keypoints_2d(k, 1) = px.y();
  }
  s.ann.rot = {wrap01(rot_euler[0]), wrap01(rot_euler[1]), wrap01(rot_euler[2])};
  s.ann.trans = trans;

  double max_prop_r = 0;
  double prop_r_px[4];
  for (int k = 0; k < 4; ++k) {
    prop_r_px[k] = std::max(1.5, cfg.camera.fx * 0.16 * spec.body_extent / kp3d[k].z());
    max_prop_r = std::max(max_prop_r, prop_r_px[k]);
  }
  const double pad = max_prop_r + 1.0;
  s.ann.bbox = {s.ann.keypoints_2d.col(0).minCoeff() - pad,
                s.ann.keypoints_2d.col(1).minCoeff() - pad,
                s.ann.keypoints_2d.col(0).maxCoeff() + pad,
                s.ann.keypoints_2d.col(1).maxCoeff() + pad};

  s.image = Image(cfg.width, cfg.height);
  const auto bgp = background_params(master_seed, background_id);
  fill_background(s.image, bgp, master_seed, background_id);

  if (trans.z() > 0) {
    const auto c = project_point(cfg.camera, trans);
    const double body_r = std::max(2.0, cfg.camera.fx * 0.5 * spec.body_extent / trans.z());
    fill_circle(s.image, c.x(), c.y(), body_r, kClassColors[spec.class_id % 7]);
    const Eigen::Vector3d nose3 =
        pose.rotation * Eigen::Vector3d(0, 0.35 * spec.body_extent, 0) + trans;
    if (nose3.z() > 0) {
      const auto np = project_point(cfg.camera, nose3);
      const std::uint8_t white[3] = {255, 255, 255};
      fill_circle(s.image, np.x(), np.y(), std::max(1.0, 0.35 * body_r), white);
    }
  }
  for (int k = 0; k < 4; ++k)
    fill_circle(s.image, s.ann.keypoints_2d(k, 0), s.ann.keypoints_2d(k, 1), prop_r_px[k],
                kPropColors[k]);
  return s;
}

DatasetManifest build_manifest(const GenerationConfig& cfg) {
  if (cfg.classes.empty() || cfg.scenes.empty())
    throw ConfigError("generation config needs at least one class and one scene");
  DatasetManifest m;
  m.width = cfg.width;
  m.height = cfg.height;
  m.intrinsics = cfg.intrinsics;
  m.master_seed = cfg.master_seed;
  m.classes = cfg.classes;
  m.scenes = cfg.scenes;
  for (auto& s : m.scenes) {
    s.camera = cfg.intrinsics;
    s.width = cfg.width;
    s.height = cfg.height;
    if (s.backgrounds.empty())
      throw ConfigError("scene " + s.scene_id + " lists no backgrounds");
  }
  for (const auto& s : m.scenes) {
    const int frames = static_cast<int>(std::lround(s.duration * s.fps));
    if (frames <= 0) throw ConfigError("scene " + s.scene_id + " has no frames");
    for (const auto& cls : m.classes)
      for (int bg : s.backgrounds) {
        SequenceEntry row;
        row.scene_id = s.scene_id;
        row.class_id = cls.class_id;
        row.background_id = bg;
        row.frames = frames;
        row.split = s.split;
        row.dir = s.scene_id + "/" + cls.name + "/bg" + std::to_string(bg);
        m.rows.push_back(std::move(row));
      }
  }
  return m;
}

DatasetManifest generate_dataset(const GenerationConfig& cfg) {
  const fs::path root(cfg.out_dir);
  if (fs::exists(root) && !fs::is_empty(root) && !cfg.overwrite)
    throw Error("output directory '" + cfg.out_dir +
                "' is not empty; pass overwrite to replace it");
  fs::create_directories(root);

  DatasetManifest m = build_manifest(cfg);
  write_manifest((root / "manifest").string(), m);
  if (cfg.manifest_only) return m;

  for (const auto& scene : m.scenes) {
    for (const auto& cls : m.classes) {
      SceneConfig sc = scene;
      sc.rng_seed = trajectory_seed(cfg.master_seed, scene.scene_id, cls.class_id);
      const auto traj = synth_impl(sc);
      for (int bg : scene.backgrounds) {
        const fs::path dir = root / scene.scene_id / cls.name / ("bg" + std::to_string(bg));
        fs::create_directories(dir);
        for (std::size_t f = 0; f < traj.size(); ++f) {
          const Sample s = render_frame(sc, traj[f].euler, traj[f].pos, cls,
                                        static_cast<int>(f), bg, cfg.master_seed);
          char name[32];
          std::snprintf(name, sizeof(name), "frame_%05zu", f);
          write_ppm((dir / (std::string(name) + ".img")).string(), s.image);
          write_annotation((dir / (std::string(name) + ".ann")).string(), s.ann);
        }
      }
    }
  }
  return m;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream f(path);
  if (!f) throw LoadError("cannot open for writing: " + path);
  f << "dronekey-manifest " << m.format_version << "\n";
  f << "resolution " << m.width << " " << m.height << "\n";
  f << "intrinsics " << fmt6(m.intrinsics.fx) << " " << fmt6(m.intrinsics.fy) << " "
    << fmt6(m.intrinsics.cx) << " " << fmt6(m.intrinsics.cy) << "\n";
  f << "seed " << m.master_seed << "\n";
  f << "classes " << m.classes.size() << "\n";
  for (const auto& c : m.classes)
    f << "class " << c.class_id << " " << c.name << " " << fmt6(c.body_extent) << "\n";
  f << "scenes " << m.scenes.size() << "\n";
  for (const auto& s : m.scenes) {
    f << "scene " << s.scene_id << " "
      << (s.motion == MotionKind::kLinear ? "linear" : "nonlinear") << " " << fmt6(s.duration)
      << " " << fmt6(s.fps) << " " << fmt6(s.z_min) << " " << fmt6(s.z_max) << " " << s.split
      << " " << s.backgrounds.size();
    for (int bg : s.backgrounds) f << " " << bg;
    f << "\n";
  }
  f << "rows " << m.rows.size() << "\n";
  for (const auto& r : m.rows)
    f << "row " << r.scene_id << " " << r.class_id << " " << r.background_id << " " << r.frames
      << " " << r.split << " " << r.dir << "\n";
  if (!f) throw LoadError("write failed: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw LoadError("cannot open: " + path);
  DatasetManifest m;
  std::string line;
  int line_no = 0;
  auto next_tokens = [&](const std::string& expect_key, std::size_t min_count) {
    if (!std::getline(f, line)) throw ParseError(line_no + 1, "unexpected end of manifest");
    ++line_no;
    auto toks = split_ws(line);
    if (toks.empty() || toks[0] != expect_key)
      throw ParseError(line_no, "expected '" + expect_key + "' record");
    if (toks.size() < min_count)
      throw ParseError(line_no, "'" + expect_key + "' record is too short");
    return toks;
  };

  auto head = next_tokens("dronekey-manifest", 2);
  m.format_version = static_cast<int>(parse_long(head[1], line_no));
  if (m.format_version != 1)
    throw ParseError(line_no, "unsupported manifest version " + head[1]);
  auto res = next_tokens("resolution", 3);
  m.width = static_cast<int>(parse_long(res[1], line_no));
  m.height = static_cast<int>(parse_long(res[2], line_no));
  auto intr = next_tokens("intrinsics", 5);
  m.intrinsics = {parse_double(intr[1], line_no), parse_double(intr[2], line_no),
                  parse_double(intr[3], line_no), parse_double(intr[4], line_no)};
  auto seed = next_tokens("seed", 2);
  m.master_seed = static_cast<std::uint64_t>(parse_long(seed[1], line_no));
  auto ncls = next_tokens("classes", 2);
  const long n_classes = parse_long(ncls[1], line_no);
  for (long i = 0; i < n_classes; ++i) {
    auto c = next_tokens("class", 4);
    DroneClassSpec spec;
    spec.class_id = static_cast<int>(parse_long(c[1], line_no));
    spec.name = c[2];
    spec.body_extent = parse_double(c[3], line_no);
    spec.propeller_layout = square_layout(spec.body_extent);
    m.classes.push_back(std::move(spec));
  }
  auto nsc = next_tokens("scenes", 2);
  const long n_scenes = parse_long(nsc[1], line_no);
  for (long i = 0; i < n_scenes; ++i) {
    auto t = next_tokens("scene", 9);
    SceneConfig s;
    s.scene_id = t[1];
    if (t[2] == "linear")
      s.motion = MotionKind::kLinear;
    else if (t[2] == "nonlinear")
      s.motion = MotionKind::kNonLinear;
    else
      throw ParseError(line_no, "unknown motion kind '" + t[2] + "'");
    s.duration = parse_double(t[3], line_no);
    s.fps = parse_double(t[4], line_no);
    s.z_min = parse_double(t[5], line_no);
    s.z_max = parse_double(t[6], line_no);
    s.split = t[7];
    const long nbgs = parse_long(t[8], line_no);
    if (static_cast<long>(t.size()) != 9 + nbgs)
      throw ParseError(line_no, "scene background count mismatch");
    for (long b = 0; b < nbgs; ++b)
      s.backgrounds.push_back(static_cast<int>(parse_long(t[9 + b], line_no)));
    s.camera = m.intrinsics;
    s.width = m.width;
    s.height = m.height;
    m.scenes.push_back(std::move(s));
  }
  auto nrows = next_tokens("rows", 2);
  const long n_rows = parse_long(nrows[1], line_no);
  for (long i = 0; i < n_rows; ++i) {
    auto t = next_tokens("row", 7);
    SequenceEntry r;
    r.scene_id = t[1];
    r.class_id = static_cast<int>(parse_long(t[2], line_no));
    r.background_id = static_cast<int>(parse_long(t[3], line_no));
    r.frames = static_cast<int>(parse_long(t[4], line_no));
    r.split = t[5];
    r.dir = t[6];
    m.rows.push_back(std::move(r));
  }
  return m;
}

void write_annotation(const std::string& path, const Annotation& a) {
  std::ofstream f(path);
  if (!f) throw LoadError("cannot open for writing: " + path);
  f << "frame " << a.frame_index << "\n";
  f << "scene " << a.scene_id << "\n";
  f << "class " << a.class_id << "\n";
  f << "bg " << a.background_id << "\n";
  f << "split " << a.split << "\n";
  const double intr[4] = {a.intrinsics.fx, a.intrinsics.fy, a.intrinsics.cx, a.intrinsics.cy};
  write_counted(f, "intrinsics", intr, 4);
  double kp2d[8];
  for (int k = 0; k < 4; ++k) {
    kp2d[2 * k] = a.keypoints_2d(k, 0);
    kp2d[2 * k + 1] = a.keypoints_2d(k, 1);
  }
  write_counted(f, "kp2d", kp2d, 8);
  double kp3d[12];
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 3; ++j) kp3d[3 * k + j] = a.keypoints_3d[k][j];
  write_counted(f, "kp3d", kp3d, 12);
  write_counted(f, "rot", a.rot.data(), 3);
  write_counted(f, "trans", a.trans.data(), 3);
  write_counted(f, "bbox", a.bbox.data(), 4);
  if (!f) throw LoadError("write failed: " + path);
}

Annotation read_annotation(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw LoadError("cannot open: " + path);
  Annotation a;
  std::string line;
  int line_no = 0;
  auto next = [&](const std::string& key, std::size_t count) {
    if (!std::getline(f, line)) throw ParseError(line_no + 1, "unexpected end of annotation");
    ++line_no;
    auto toks = split_ws(line);
    if (toks.empty() || toks[0] != key)
      throw ParseError(line_no, "expected '" + key + "' record");
    if (toks.size() != count + 1)
      throw ParseError(line_no, "'" + key + "' expects " + std::to_string(count) + " values");
    return toks;
  };
  a.frame_index = static_cast<int>(parse_long(next("frame", 1)[1], line_no));
  a.scene_id = next("scene", 1)[1];
  a.class_id = static_cast<int>(parse_long(next("class", 1)[1], line_no));
  a.background_id = static_cast<int>(parse_long(next("bg", 1)[1], line_no));
  a.split = next("split", 1)[1];
  auto intr = next("intrinsics", 4);
  a.intrinsics = {parse_double(intr[1], line_no), parse_double(intr[2], line_no),
                  parse_double(intr[3], line_no), parse_double(intr[4], line_no)};
  auto kp2d = next("kp2d", 8);
  for (int k = 0; k < 4; ++k) {
    a.keypoints_2d(k, 0) = parse_double(kp2d[1 + 2 * k], line_no);
    a.keypoints_2d(k, 1) = parse_double(kp2d[2 + 2 * k], line_no);
  }
  auto kp3d = next("kp3d", 12);
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 3; ++j) a.keypoints_3d[k][j] = parse_double(kp3d[1 + 3 * k + j], line_no);
  auto rot = next("rot", 3);
  for (int j = 0; j < 3; ++j) a.rot[j] = parse_double(rot[1 + j], line_no);
  auto tr = next("trans", 3);
  for (int j = 0; j < 3; ++j) a.trans[j] = parse_double(tr[1 + j], line_no);
  auto bb = next("bbox", 4);
  for (int j = 0; j < 4; ++j) a.bbox[j] = parse_double(bb[1 + j], line_no);
  return a;
}

Sample load_sample(const std::string& root, const DatasetManifest& m, long index) {
  if (index < 0 || index >= m.total_frames())
    throw Error("sample index " + std::to_string(index) + " out of range [0," +
                std::to_string(m.total_frames()) + ")");
  long offset = 0;
  for (const auto& r : m.rows) {
    if (index < offset + r.frames) {
      const long frame = index - offset;
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%05ld", frame);
      const fs::path base = fs::path(root) / r.dir / name;
      Sample s;
      s.image = read_ppm(base.string() + ".img");
      s.ann = read_annotation(base.string() + ".ann");
      return s;
    }
    offset += r.frames;
  }
  throw Error("sample index walk failed (corrupt manifest?)");
}

std::vector<long> split_indices(const DatasetManifest& m, const std::string& split) {
  std::vector<long> out;
  long offset = 0;
  for (const auto& r : m.rows) {
    if (r.split == split)
      for (int i = 0; i < r.frames; ++i) out.push_back(offset + i);
    offset += r.frames;
  }
  return out;
}

}  // namespace dronekey
