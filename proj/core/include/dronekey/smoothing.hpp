#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dronekey/errors.hpp"

namespace dronekey {

/// One frame of a pose track: normalized Euler rotation in [0,1) per
/// component and a camera-frame translation in meters.
struct TrackPoint {
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

struct PoseTrack {
  double fps = 30.0;
  std::vector<TrackPoint> points;
};

/// Discrete Gaussian taps exp(-k^2 / 2 sigma^2) for k in [-R, R] with
/// R = ceil(3 sigma), normalized to sum 1. Throws ConfigError for sigma <= 0.
std::vector<double> gaussian_kernel(double sigma);

/// Temporal smoothing. Translations are convolved with the kernel; near the
/// track ends the in-range taps are renormalized, so constant tracks pass
/// through unchanged. Rotations are smoothed on the unit circle: each
/// component maps to angle 2*pi*wrap01(r), the kernel averages the circle
/// vectors, and the angle of the mean vector maps back to [0,1).
PoseTrack gaussian_smooth_track(const PoseTrack& track, double sigma);

/// Track files are line-oriented text: "dronekey-track 1", "fps <v>",
/// "count <n>", then one "r0 r1 r2 tx ty tz" line per frame at six decimals.
void write_track(const std::string& path, const PoseTrack& track);
PoseTrack read_track(const std::string& path);

}  // namespace dronekey
