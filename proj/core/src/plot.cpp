#include "dronekey/plot.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace dronekey {

namespace {

constexpr double kDepthScale = 0.45;
constexpr double kDepthAngle = M_PI / 6.0;

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr Rgb kPalette[] = {
    {220, 60, 60}, {60, 130, 220}, {60, 180, 80},  {230, 170, 40},
    {160, 80, 200}, {40, 190, 190}, {230, 110, 180}, {130, 130, 130},
};
constexpr int kPaletteSize = static_cast<int>(sizeof(kPalette) / sizeof(kPalette[0]));

Eigen::Vector2d cavalier(const Eigen::Vector3d& p) {
  return {p.x() + kDepthScale * p.z() * std::cos(kDepthAngle),
          p.y() + kDepthScale * p.z() * std::sin(kDepthAngle)};
}

struct Mapper {
  double sx, sy, ox, oy;
  int map_x(double x) const { return static_cast<int>(std::lround(ox + sx * x)); }
  int map_y(double y) const { return static_cast<int>(std::lround(oy + sy * y)); }
};

Mapper fit(const std::vector<Eigen::Vector2d>& pts, int width, int height, int margin) {
  double xmin = pts[0].x(), xmax = pts[0].x(), ymin = pts[0].y(), ymax = pts[0].y();
  for (const auto& p : pts) {
    xmin = std::min(xmin, p.x());
    xmax = std::max(xmax, p.x());
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  }
  const double dx = std::max(xmax - xmin, 1e-9);
  const double dy = std::max(ymax - ymin, 1e-9);
  const double s = std::min((width - 2.0 * margin) / dx, (height - 2.0 * margin) / dy);
  Mapper m;
  m.sx = s;
  m.sy = -s;  // image y grows downward
  m.ox = (width - s * (xmax - xmin)) / 2.0 - s * xmin;
  m.oy = (height + s * (ymax - ymin)) / 2.0 + s * ymin;
  return m;
}

void draw_frame(Image& img) {
  img.data.assign(img.data.size(), 250);
  draw_line(img, 0, 0, img.width - 1, 0, 40, 40, 40);
  draw_line(img, 0, img.height - 1, img.width - 1, img.height - 1, 40, 40, 40);
  draw_line(img, 0, 0, 0, img.height - 1, 40, 40, 40);
  draw_line(img, img.width - 1, 0, img.width - 1, img.height - 1, 40, 40, 40);
}

}  // namespace

void draw_line(Image& img, int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g,
               std::uint8_t b) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int stepx = x0 < x1 ? 1 : -1, stepy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    if (img.inside(x0, y0)) img.set(x0, y0, r, g, b);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += stepx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += stepy;
    }
  }
}

void draw_disc(Image& img, int cx, int cy, int radius, std::uint8_t r, std::uint8_t g,
               std::uint8_t b) {
  for (int y = -radius; y <= radius; ++y)
    for (int x = -radius; x <= radius; ++x)
      if (x * x + y * y <= radius * radius && img.inside(cx + x, cy + y))
        img.set(cx + x, cy + y, r, g, b);
}

Image plot_track(const PoseTrack& track, int width, int height) {
  if (track.points.empty()) throw Error("cannot plot an empty track");
  Image img(width, height);
  draw_frame(img);
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(track.points.size());
  for (const auto& p : track.points) pts.push_back(cavalier(p.t));
  const Mapper m = fit(pts, width, height, 24);
  for (std::size_t i = 1; i < pts.size(); ++i)
    draw_line(img, m.map_x(pts[i - 1].x()), m.map_y(pts[i - 1].y()), m.map_x(pts[i].x()),
              m.map_y(pts[i].y()), 60, 130, 220);
  const int x0 = m.map_x(pts.front().x()), y0 = m.map_y(pts.front().y());
  const int x1 = m.map_x(pts.back().x()), y1 = m.map_y(pts.back().y());
  draw_disc(img, x0, y0, 4, 60, 180, 80);
  draw_line(img, x1 - 4, y1 - 4, x1 + 4, y1 - 4, 220, 60, 60);
  draw_line(img, x1 + 4, y1 - 4, x1 + 4, y1 + 4, 220, 60, 60);
  draw_line(img, x1 + 4, y1 + 4, x1 - 4, y1 + 4, 220, 60, 60);
  draw_line(img, x1 - 4, y1 + 4, x1 - 4, y1 - 4, 220, 60, 60);
  return img;
}

Image plot_scatter(const PcaResult& projection, int width, int height) {
  if (projection.points.rows() == 0) throw Error("cannot plot an empty projection");
  Image img(width, height);
  draw_frame(img);
  std::map<std::string, int> color_of;
  for (const auto& label : projection.labels) color_of[label] = 0;
  int next_color = 0;
  for (auto& kv : color_of) kv.second = next_color++ % kPaletteSize;
  std::vector<Eigen::Vector2d> pts;
  for (Eigen::Index i = 0; i < projection.points.rows(); ++i)
    pts.emplace_back(projection.points(i, 0), projection.points(i, 1));
  const Mapper m = fit(pts, width, height, 24);
  for (Eigen::Index i = 0; i < projection.points.rows(); ++i) {
    const Rgb c = kPalette[color_of[projection.labels[static_cast<std::size_t>(i)]]];
    draw_disc(img, m.map_x(pts[static_cast<std::size_t>(i)].x()),
              m.map_y(pts[static_cast<std::size_t>(i)].y()), 3, c.r, c.g, c.b);
  }
  // Legend swatches in label-sorted order, top-left.
  int row = 0;
  for (const auto& kv : color_of) {
    const Rgb c = kPalette[kv.second];
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        if (img.inside(6 + x, 6 + row * 12 + y)) img.set(6 + x, 6 + row * 12 + y, c.r, c.g, c.b);
    ++row;
  }
  return img;
}

}  // namespace dronekey
