#include "mmm/cli/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mmm/motiondata/io.hpp"

namespace mmm::cli {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// XML comments may not contain "--".
std::string xml_comment(std::string s) {
  std::size_t pos = 0;
  while ((pos = s.find("--", pos)) != std::string::npos) {
    s.replace(pos, 2, "- -");
  }
  if (!s.empty() && s.back() == '-') s += ' ';
  return "<!-- " + s + " -->\n";
}

std::string dim_name(int d, int dims) {
  static const char* root[] = {"root_vx", "root_vz", "root_yaw_rate", "root_height"};
  const bool standard = dims >= data::kRootDims && (dims - data::kRootDims) % 3 == 0;
  if (!standard) return "d" + std::to_string(d);
  if (d < data::kRootDims) return root[d];
  const int j = (d - data::kRootDims) / 3;
  return "joint" + std::to_string(j) + "_" + "xyz"[(d - data::kRootDims) % 3];
}

}  // namespace

std::vector<Point> root_trajectory(const data::Motion& m) {
  m.validate("root_trajectory");
  std::vector<Point> pts(static_cast<std::size_t>(m.frames));
  const double dt = 1.0 / m.fps;
  double x = 0.0, z = 0.0, heading = 0.0;
  for (int t = 0; t < m.frames; ++t) {
    pts[t] = {x, z};
    const double vx = m.at(t, data::kRootVx), vz = m.at(t, data::kRootVz);
    x += (vx * std::cos(heading) - vz * std::sin(heading)) * dt;
    z += (vx * std::sin(heading) + vz * std::cos(heading)) * dt;
    heading += m.at(t, data::kRootYawRate) * dt;
  }
  return pts;
}

std::string trajectory_svg(const data::Motion& m, const std::vector<std::string>& comments) {
  const auto pts = root_trajectory(m);
  constexpr double kSize = 400.0, kMargin = 20.0;
  double x0 = pts[0].x, x1 = x0, z0 = pts[0].z, z1 = z0;
  for (const Point& p : pts) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    z0 = std::min(z0, p.z);
    z1 = std::max(z1, p.z);
  }
  const double extent = std::max(x1 - x0, z1 - z0);
  const double scale = extent > 0.0 ? (kSize - 2 * kMargin) / extent : 1.0;
  const double cx = 0.5 * (x0 + x1), cz = 0.5 * (z0 + z1);
  // Forward is right, left is up.
  auto sx = [&](const Point& p) { return fmt(kSize / 2 + (p.x - cx) * scale); };
  auto sy = [&](const Point& p) { return fmt(kSize / 2 - (p.z - cz) * scale); };
  auto color = [&](std::size_t i) {
    const double u = pts.size() > 1 ? static_cast<double>(i) / static_cast<double>(pts.size() - 1) : 0.0;
    const int r = static_cast<int>(std::lround(255.0 * u));
    return "rgb(" + std::to_string(r) + ",0," + std::to_string(255 - r) + ")";
  };

  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  for (const auto& c : comments) out += xml_comment(c);
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\" viewBox=\"0 0 400 400\">\n";
  out += "<rect width=\"400\" height=\"400\" fill=\"white\"/>\n";
  out += "<g stroke-width=\"2\" stroke-linecap=\"round\">\n";
  for (std::size_t i = 1; i < pts.size(); ++i) {
    out += "<line x1=\"" + sx(pts[i - 1]) + "\" y1=\"" + sy(pts[i - 1]) + "\" x2=\"" + sx(pts[i]) + "\" y2=\"" +
           sy(pts[i]) + "\" stroke=\"" + color(i) + "\"/>\n";
  }
  out += "</g>\n";
  out += "<circle cx=\"" + sx(pts.front()) + "\" cy=\"" + sy(pts.front()) + "\" r=\"4\" fill=\"" + color(0) + "\"/>\n";
  out += "<circle cx=\"" + sx(pts.back()) + "\" cy=\"" + sy(pts.back()) + "\" r=\"4\" fill=\"" +
         color(pts.size() - 1) + "\"/>\n";
  out += "</svg>\n";
  return out;
}

std::string motion_csv(const data::Motion& m, const std::vector<std::string>& comments) {
  m.validate("motion_csv");
  std::string out;
  for (const auto& c : comments) out += "# " + c + "\n";
  out += "frame,time";
  for (int d = 0; d < m.dims; ++d) out += "," + dim_name(d, m.dims);
  out += "\n";
  for (int t = 0; t < m.frames; ++t) {
    out += std::to_string(t) + "," + data::float_str(static_cast<float>(t) / m.fps);
    for (int d = 0; d < m.dims; ++d) out += "," + data::float_str(m.at(t, d));
    out += "\n";
  }
  return out;
}

}  // namespace mmm::cli
