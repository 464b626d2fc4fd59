#pragma once

#include <string>

#include "dtplace/metrics.hpp"

namespace dtplace {

struct RenderOptions {
  double width_px = 800.0;  // canvas width on the page; height follows the aspect ratio
  bool labels = true;
  bool net_boxes = false;
};

/// Standalone SVG: canvas border, placed macros filled and labelled, fixed
/// modules hatched, ports as dots, optional dashed net bounding boxes.
/// Physical y grows upward; the image is flipped accordingly.
std::string render_svg(const PlacementSolution& solution, const RenderOptions& options = {});

}  // namespace dtplace
