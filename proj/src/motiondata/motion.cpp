#include "mmm/motiondata/motion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mmm/error.hpp"

namespace mmm::data {

Motion::Motion(int frames_, int dims_, float fps_)
    : frames(frames_), dims(dims_), fps(fps_), values(static_cast<std::size_t>(frames_) * dims_, 0.0f) {}

void Motion::validate(const char* where) const {
  if (frames < 1 || dims < 1) {
    throw Error(ErrorKind::value, where, "motion needs at least one frame and one dim");
  }
  if (values.size() != static_cast<std::size_t>(frames) * dims) {
    throw Error(ErrorKind::shape, where, "motion holds " + std::to_string(values.size()) + " values for " +
                                             std::to_string(frames) + "x" + std::to_string(dims));
  }
  if (!(fps > 0.0f) || !std::isfinite(fps)) {
    throw Error(ErrorKind::value, where, "fps must be positive");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorKind::value, where, "non-finite value at frame " + std::to_string(i / dims) + ", dim " +
                                               std::to_string(i % dims));
    }
  }
}

BodySplit BodySplit::standard(int joints) {
  BodySplit s;
  for (int d = 0; d < kRootDims; ++d) {
    s.lower.push_back(d);
  }
  for (int j = 0; j < joints; ++j) {
    auto& side = j < 2 ? s.upper : s.lower;
    for (int a = 0; a < 3; ++a) {
      side.push_back(joint_dim(j, a));
    }
  }
  return s;
}

void BodySplit::validate(int dims) const {
  std::vector<int> owner(static_cast<std::size_t>(dims), 0);
  for (const auto* side : {&upper, &lower}) {
    for (int d : *side) {
      if (d < 0 || d >= dims) {
        throw Error(ErrorKind::value, "body_split", "dim " + std::to_string(d) + " outside [0," + std::to_string(dims) + ")");
      }
      if (++owner[static_cast<std::size_t>(d)] > 1) {
        throw Error(ErrorKind::value, "body_split", "dim " + std::to_string(d) + " assigned twice");
      }
    }
  }
  for (int d = 0; d < dims; ++d) {
    if (owner[static_cast<std::size_t>(d)] == 0) {
      throw Error(ErrorKind::value, "body_split", "dim " + std::to_string(d) + " not covered");
    }
  }
}

namespace {

Motion gather(const Motion& m, const std::vector<int>& dims) {
  Motion out(m.frames, static_cast<int>(dims.size()), m.fps);
  for (int t = 0; t < m.frames; ++t) {
    for (std::size_t k = 0; k < dims.size(); ++k) {
      out.at(t, static_cast<int>(k)) = m.at(t, dims[k]);
    }
  }
  return out;
}

}  // namespace

SplitMotion split_body(const Motion& m, const BodySplit& split) {
  split.validate(m.dims);
  return {gather(m, split.upper), gather(m, split.lower)};
}

Motion join_body(const Motion& upper, const Motion& lower, const BodySplit& split) {
  const int dims = static_cast<int>(split.upper.size() + split.lower.size());
  split.validate(dims);
  if (upper.frames != lower.frames || upper.dims != static_cast<int>(split.upper.size()) ||
      lower.dims != static_cast<int>(split.lower.size())) {
    throw Error(ErrorKind::shape, "join_body", "halves do not match the split");
  }
  Motion out(upper.frames, dims, upper.fps);
  for (int t = 0; t < out.frames; ++t) {
    for (std::size_t k = 0; k < split.upper.size(); ++k) {
      out.at(t, split.upper[k]) = upper.at(t, static_cast<int>(k));
    }
    for (std::size_t k = 0; k < split.lower.size(); ++k) {
      out.at(t, split.lower[k]) = lower.at(t, static_cast<int>(k));
    }
  }
  return out;
}

NormStats NormStats::fit(std::span<const Motion* const> motions) {
  if (motions.empty()) {
    throw Error(ErrorKind::value, "normalize", "no motions to fit statistics on");
  }
  const int dims = motions.front()->dims;
  std::vector<double> s(static_cast<std::size_t>(dims), 0.0);
  std::vector<double> s2(static_cast<std::size_t>(dims), 0.0);
  std::size_t count = 0;
  for (const Motion* m : motions) {
    if (m->dims != dims) {
      throw Error(ErrorKind::shape, "normalize", "mixed feature dims");
    }
    for (int t = 0; t < m->frames; ++t) {
      for (int d = 0; d < dims; ++d) {
        s[static_cast<std::size_t>(d)] += m->at(t, d);
      }
    }
    count += static_cast<std::size_t>(m->frames);
  }
  NormStats st;
  for (int d = 0; d < dims; ++d) {
    st.mean.push_back(static_cast<float>(s[static_cast<std::size_t>(d)] / static_cast<double>(count)));
  }
  // Second pass on centred values keeps the variance accurate.
  for (const Motion* m : motions) {
    for (int t = 0; t < m->frames; ++t) {
      for (int d = 0; d < dims; ++d) {
        const double c = static_cast<double>(m->at(t, d)) - st.mean[static_cast<std::size_t>(d)];
        s2[static_cast<std::size_t>(d)] += c * c;
      }
    }
  }
  for (int d = 0; d < dims; ++d) {
    const double sd = std::sqrt(s2[static_cast<std::size_t>(d)] / static_cast<double>(count));
    st.std.push_back(sd < 1e-8 ? 1.0f : static_cast<float>(sd));
  }
  return st;
}

NormStats NormStats::select(const std::vector<int>& dims) const {
  NormStats out;
  for (int d : dims) {
    out.mean.push_back(mean.at(static_cast<std::size_t>(d)));
    out.std.push_back(std.at(static_cast<std::size_t>(d)));
  }
  return out;
}

namespace {

void check_stats(const Motion& m, const NormStats& stats, const char* where) {
  if (stats.mean.size() != static_cast<std::size_t>(m.dims) || stats.std.size() != static_cast<std::size_t>(m.dims)) {
    throw Error(ErrorKind::shape, where, "statistics for " + std::to_string(stats.mean.size()) + " dims, motion has " +
                                             std::to_string(m.dims));
  }
}

}  // namespace

Motion normalize(const Motion& m, const NormStats& stats) {
  check_stats(m, stats, "normalize");
  Motion out = m;
  for (int t = 0; t < m.frames; ++t) {
    for (int d = 0; d < m.dims; ++d) {
      out.at(t, d) = (m.at(t, d) - stats.mean[static_cast<std::size_t>(d)]) / stats.std[static_cast<std::size_t>(d)];
    }
  }
  return out;
}

Motion denormalize(const Motion& m, const NormStats& stats) {
  check_stats(m, stats, "denormalize");
  Motion out = m;
  for (int t = 0; t < m.frames; ++t) {
    for (int d = 0; d < m.dims; ++d) {
      out.at(t, d) = m.at(t, d) * stats.std[static_cast<std::size_t>(d)] + stats.mean[static_cast<std::size_t>(d)];
    }
  }
  return out;
}

}  // namespace mmm::data
