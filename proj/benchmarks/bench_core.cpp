#include <benchmark/benchmark.h>

#include "dronekey/dataset.hpp"
#include "dronekey/model.hpp"
#include "dronekey/pnp.hpp"
#include "dronekey/smoothing.hpp"

namespace {

using namespace dronekey;

void BM_PixelToRay(benchmark::State& state) {
  const CameraIntrinsics k{1000, 1000, 960, 540};
  double x = 100.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(pixel_to_ray(k, {x, 540.0}));
    x = x < 1900.0 ? x + 1.0 : 100.0;
  }
}
BENCHMARK(BM_PixelToRay);

void BM_PnpSolve(benchmark::State& state) {
  const CameraIntrinsics k{1000, 1000, 960, 540};
  PnPProblem problem;
  problem.intrinsics = k;
  problem.points_3d_body = square_layout(0.2);
  const Eigen::Matrix3d r = euler_norm_to_matrix({0.1, 0.05, 0.9});
  const Eigen::Vector3d t{0.3, -0.2, 5.0};
  for (int i = 0; i < 4; ++i)
    problem.points_2d[i] = project_point(k, r * problem.points_3d_body[i] + t);
  for (auto _ : state) benchmark::DoNotOptimize(pnp_solve(problem));
}
BENCHMARK(BM_PnpSolve);

void BM_ModelForward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.n_classes = 2;
  DroneKeyModel model(cfg);
  Image img(cfg.resolution, cfg.resolution);
  for (int i = 0; i < static_cast<int>(img.data.size()); ++i)
    img.data[i] = static_cast<std::uint8_t>((i * 31) & 0xFF);
  Annotation ann;
  ann.keypoints_3d = square_layout(0.1);
  ann.trans = {0, 0, 2.5};
  model.set_targets(ann);
  for (auto _ : state) {
    model.set_image(img);
    model.forward();
    benchmark::DoNotOptimize(model);
  }
}
BENCHMARK(BM_ModelForward);

void BM_SmoothTrack(benchmark::State& state) {
  PoseTrack track;
  track.fps = 30;
  for (int i = 0; i < 360; ++i) {
    TrackPoint p;
    p.r = {wrap01(i / 360.0), 0.1, 0.9};
    p.t = {std::sin(i / 30.0), std::cos(i / 40.0), 4.0 + 0.01 * i};
    track.points.push_back(p);
  }
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_smooth_track(track, 2.0));
}
BENCHMARK(BM_SmoothTrack);

}  // namespace

BENCHMARK_MAIN();
