#pragma once

#include <span>
#include <vector>

namespace mmm::data {

/// Feature layout of one frame (J joints):
///   0 root velocity x (body frame, m/s; +x is facing direction)
///   1 root velocity z (body frame, m/s; +z is the figure's left)
///   2 root angular velocity about the vertical axis (rad/s, CCW positive)
///   3 root height (m)
///   4 + 3j .. 6 + 3j  joint j offset from the root in the body frame (x, y, z)
/// Joints: 0 left hand, 1 right hand, 2 left foot, 3 right foot.
inline constexpr int kRootVx = 0;
inline constexpr int kRootVz = 1;
inline constexpr int kRootYawRate = 2;
inline constexpr int kRootHeight = 3;
inline constexpr int kRootDims = 4;
inline constexpr int kDefaultJoints = 4;

inline constexpr int dims_for_joints(int joints) { return kRootDims + 3 * joints; }
inline constexpr int joint_dim(int joint, int axis) { return kRootDims + 3 * joint + axis; }

struct Motion {
  int frames = 0;
  int dims = 0;
  float fps = 20.0f;
  std::vector<float> values;  // frames x dims, row-major

  Motion() = default;
  Motion(int frames, int dims, float fps);

  float& at(int t, int d) { return values[static_cast<std::size_t>(t) * dims + d]; }
  float at(int t, int d) const { return values[static_cast<std::size_t>(t) * dims + d]; }
  std::span<const float> row(int t) const { return {values.data() + static_cast<std::size_t>(t) * dims, static_cast<std::size_t>(dims)}; }

  /// frames >= 1, dims >= 1, size consistent, all values finite.
  void validate(const char* where) const;

  bool operator==(const Motion&) const = default;
};

/// Disjoint, covering partition of the feature dims into upper and lower body.
struct BodySplit {
  std::vector<int> upper;
  std::vector<int> lower;

  /// Hands to upper; root channels and feet to lower.
  static BodySplit standard(int joints = kDefaultJoints);
  void validate(int dims) const;
};

struct SplitMotion {
  Motion upper;
  Motion lower;
};

SplitMotion split_body(const Motion& m, const BodySplit& split);
Motion join_body(const Motion& upper, const Motion& lower, const BodySplit& split);

struct NormStats {
  std::vector<float> mean;
  std::vector<float> std;

  /// Per-dim mean/std over every frame of `motions`; std below 1e-8 is clamped to 1.
  static NormStats fit(std::span<const Motion* const> motions);
  NormStats select(const std::vector<int>& dims) const;
};

Motion normalize(const Motion& m, const NormStats& stats);
Motion denormalize(const Motion& m, const NormStats& stats);

}  // namespace mmm::data
