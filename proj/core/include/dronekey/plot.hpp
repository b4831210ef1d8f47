#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dronekey/analysis.hpp"
#include "dronekey/image.hpp"
#include "dronekey/smoothing.hpp"

namespace dronekey {

/// Cavalier projection of the translation path: screen x = X + 0.45 Z cos a,
/// screen y = Y + 0.45 Z sin a with a = 30 degrees, autoscaled with a margin.
/// Start of the track gets a filled square, the end a hollow one.
Image plot_track(const PoseTrack& track, int width = 640, int height = 480);

/// 2D scatter; one palette color per distinct label (sorted order), legend
/// swatches stacked in the top-left corner.
Image plot_scatter(const PcaResult& projection, int width = 640, int height = 480);

void draw_line(Image& img, int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g,
               std::uint8_t b);
void draw_disc(Image& img, int cx, int cy, int radius, std::uint8_t r, std::uint8_t g,
               std::uint8_t b);

}  // namespace dronekey
