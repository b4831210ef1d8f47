#include "dronekey/smoothing.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dronekey/geometry.hpp"

namespace dronekey {

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0)) throw ConfigError("smoothing sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> w(2 * radius + 1);
  double sum = 0;
  for (int k = -radius; k <= radius; ++k) {
    w[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    sum += w[k + radius];
  }
  for (double& v : w) v /= sum;
  return w;
}

PoseTrack gaussian_smooth_track(const PoseTrack& track, double sigma) {
  const std::vector<double> kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const int n = static_cast<int>(track.points.size());
  if (n == 0) throw Error("cannot smooth an empty track");

  PoseTrack out;
  out.fps = track.fps;
  out.points.resize(n);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    Eigen::Vector3d s = Eigen::Vector3d::Zero();
    double mass = 0;
    for (int k = -radius; k <= radius; ++k) {
      const int j = i + k;
      if (j < 0 || j >= n) continue;
      const double w = kernel[k + radius];
      mass += w;
      t += w * track.points[j].t;
      for (int a = 0; a < 3; ++a) {
        const double theta = 2.0 * M_PI * wrap01(track.points[j].r[a]);
        c[a] += w * std::cos(theta);
        s[a] += w * std::sin(theta);
      }
    }
    out.points[i].t = t / mass;
    for (int a = 0; a < 3; ++a)
      out.points[i].r[a] = wrap01(std::atan2(s[a], c[a]) / (2.0 * M_PI));
  }
  return out;
}

void write_track(const std::string& path, const PoseTrack& track) {
  std::ofstream f(path);
  if (!f) throw LoadError("cannot open for writing: " + path);
  char buf[256];
  f << "dronekey-track 1\n";
  std::snprintf(buf, sizeof(buf), "fps %.6f\n", track.fps);
  f << buf;
  f << "count " << track.points.size() << "\n";
  for (const auto& p : track.points) {
    std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %.6f %.6f %.6f\n", p.r[0], p.r[1], p.r[2],
                  p.t[0], p.t[1], p.t[2]);
    f << buf;
  }
  if (!f) throw LoadError("write failed: " + path);
}

PoseTrack read_track(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw LoadError("cannot open: " + path);
  int lineno = 0;
  std::string line;
  auto next = [&]() -> std::string& {
    if (!std::getline(f, line)) throw ParseError(lineno + 1, path + ": unexpected end of file");
    ++lineno;
    return line;
  };
  if (next() != "dronekey-track 1") throw ParseError(lineno, path + ": bad track header");
  PoseTrack track;
  {
    std::istringstream ss(next());
    std::string key;
    if (!(ss >> key >> track.fps) || key != "fps" || !(track.fps > 0))
      throw ParseError(lineno, path + ": expected 'fps <value>'");
  }
  long count = 0;
  {
    std::istringstream ss(next());
    std::string key;
    if (!(ss >> key >> count) || key != "count" || count < 0)
      throw ParseError(lineno, path + ": expected 'count <n>'");
  }
  for (long i = 0; i < count; ++i) {
    std::istringstream ss(next());
    TrackPoint p;
    if (!(ss >> p.r[0] >> p.r[1] >> p.r[2] >> p.t[0] >> p.t[1] >> p.t[2]))
      throw ParseError(lineno, path + ": expected six pose values");
    std::string extra;
    if (ss >> extra) throw ParseError(lineno, path + ": trailing tokens after pose values");
    track.points.push_back(p);
  }
  return track;
}

}  // namespace dronekey
