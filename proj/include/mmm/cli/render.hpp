#pragma once

#include <string>
#include <vector>

#include "mmm/motiondata/motion.hpp"

namespace mmm::cli {

struct Point {
  double x = 0.0;  // world forward at frame 0
  double z = 0.0;  // world left at frame 0
};

/// Root position per frame, integrating the body-frame root velocities and
/// yaw rate from the origin with heading 0.
std::vector<Point> root_trajectory(const data::Motion& m);

/// Standalone SVG of the root trajectory, one segment per frame pair
/// colored from blue (start) to red (end). `comments` become XML comments.
std::string trajectory_svg(const data::Motion& m, const std::vector<std::string>& comments = {});

/// Per-dim time series: `frame,time,<dim names>` then one row per frame.
/// `comments` become leading `# ` lines.
std::string motion_csv(const data::Motion& m, const std::vector<std::string>& comments = {});

}  // namespace mmm::cli
