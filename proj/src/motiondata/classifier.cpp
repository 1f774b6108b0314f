#include "mmm/motiondata/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mmm/error.hpp"

namespace mmm::data {

VerbClassifier::Features VerbClassifier::window_features(const Motion& m, int start, int length) {
  if (m.dims < dims_for_joints(2) || start < 0 || length < 1 || start + length > m.frames) {
    throw Error(ErrorKind::value, "classifier", "window outside motion or motion lacks hand joints");
  }
  double speed = 0, ang = 0, hand_y = 0, h = 0, h2 = 0;
  std::array<double, 6> hs{}, hs2{};
  std::array<double, 4> fs{}, fs2{};  // foot x/z of feet 2 and 3
  const bool has_feet = m.dims >= dims_for_joints(4);
  for (int t = start; t < start + length; ++t) {
    speed += std::hypot(m.at(t, kRootVx), m.at(t, kRootVz));
    ang += std::abs(m.at(t, kRootYawRate));
    h += m.at(t, kRootHeight);
    h2 += static_cast<double>(m.at(t, kRootHeight)) * m.at(t, kRootHeight);
    hand_y += 0.5 * (m.at(t, joint_dim(0, 1)) + m.at(t, joint_dim(1, 1)));
    for (int k = 0; k < 6; ++k) {
      const double v = m.at(t, kRootDims + k);
      hs[static_cast<std::size_t>(k)] += v;
      hs2[static_cast<std::size_t>(k)] += v * v;
    }
    if (has_feet) {
      const std::array<int, 4> fd = {joint_dim(2, 0), joint_dim(2, 2), joint_dim(3, 0), joint_dim(3, 2)};
      for (std::size_t k = 0; k < 4; ++k) {
        const double v = m.at(t, fd[k]);
        fs[k] += v;
        fs2[k] += v * v;
      }
    }
  }
  const double n = length;
  double hand_var = 0;
  for (int k = 0; k < 6; ++k) {
    const double mu = hs[static_cast<std::size_t>(k)] / n;
    hand_var += std::max(0.0, hs2[static_cast<std::size_t>(k)] / n - mu * mu);
  }
  double foot_var = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double mu = fs[k] / n;
    foot_var += std::max(0.0, fs2[k] / n - mu * mu);
  }
  const double hm = h / n;
  const double slope = (m.at(start + length - 1, kRootHeight) - m.at(start, kRootHeight));
  return {static_cast<float>(speed / n),
          static_cast<float>(ang / n),
          static_cast<float>(std::sqrt(hand_var / 6.0)),
          static_cast<float>(hand_y / n),
          static_cast<float>(hm),
          static_cast<float>(std::sqrt(std::max(0.0, h2 / n - hm * hm))),
          static_cast<float>(slope),
          static_cast<float>(std::sqrt(foot_var / 4.0))};
}

VerbClassifier VerbClassifier::fit(const Dataset& ds, const std::vector<int>& indices) {
  std::vector<Features> feats;
  std::vector<int> labels;
  for (int idx : indices) {
    const Item& it = ds.items.at(static_cast<std::size_t>(idx));
    int begin = 0;
    for (std::size_t p = 0; p < it.primitive_frames.size(); ++p) {
      const int end = begin + it.primitive_frames[p];
      // Skip the blend-in at the start of every primitive after the first.
      const int first = p == 0 ? begin : begin + 10;
      for (int s = first; s + kWindow <= end; s += kStride) {
        feats.push_back(window_features(it.motion, s, kWindow));
        labels.push_back(it.prompt.verb_ids[p]);
      }
      begin = end;
    }
  }
  if (feats.empty()) {
    throw Error(ErrorKind::value, "classifier", "no training windows");
  }
  VerbClassifier c;
  for (int k = 0; k < kFeatures; ++k) {
    double s = 0, s2 = 0;
    for (const auto& f : feats) {
      s += f[static_cast<std::size_t>(k)];
      s2 += static_cast<double>(f[static_cast<std::size_t>(k)]) * f[static_cast<std::size_t>(k)];
    }
    const double mu = s / static_cast<double>(feats.size());
    const double sd = std::sqrt(std::max(0.0, s2 / static_cast<double>(feats.size()) - mu * mu));
    c.mean_[static_cast<std::size_t>(k)] = static_cast<float>(mu);
    c.scale_[static_cast<std::size_t>(k)] = sd < 1e-8 ? 1.0f : static_cast<float>(1.0 / sd);
  }
  std::array<std::array<double, kFeatures>, kVerbCount> acc{};
  std::array<int, kVerbCount> count{};
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto v = static_cast<std::size_t>(labels[i]);
    ++count[v];
    for (int k = 0; k < kFeatures; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      acc[v][kk] += (feats[i][kk] - c.mean_[kk]) * c.scale_[kk];
    }
  }
  for (int v = 0; v < kVerbCount; ++v) {
    for (int k = 0; k < kFeatures; ++k) {
      const auto vv = static_cast<std::size_t>(v);
      const auto kk = static_cast<std::size_t>(k);
      // A verb absent from training gets an unreachable centroid.
      c.centroids_[vv][kk] = count[vv] > 0 ? static_cast<float>(acc[vv][kk] / count[vv]) : 1e30f;
    }
  }
  return c;
}

int VerbClassifier::classify_window(const Motion& m, int start, int length) const {
  const Features f = window_features(m, start, length);
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int v = 0; v < kVerbCount; ++v) {
    double d = 0;
    for (int k = 0; k < kFeatures; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double z = (f[kk] - mean_[kk]) * scale_[kk] - centroids_[static_cast<std::size_t>(v)][kk];
      d += z * z;
    }
    if (d < best_d) {
      best_d = d;
      best = v;
    }
  }
  return best;
}

std::vector<int> VerbClassifier::classify(const Motion& m) const {
  if (m.frames < kWindow) {
    return {classify_window(m, 0, m.frames)};
  }
  std::vector<std::pair<int, int>> runs;  // (label, windows)
  for (int s = 0; s + kWindow <= m.frames; s += kStride) {
    const int label = classify_window(m, s, kWindow);
    if (!runs.empty() && runs.back().first == label) {
      ++runs.back().second;
    } else {
      runs.emplace_back(label, 1);
    }
  }
  std::vector<int> verbs;
  for (const auto& [label, len] : runs) {
    if (len >= kMinRun && (verbs.empty() || verbs.back() != label)) {
      verbs.push_back(label);
    }
  }
  if (verbs.empty()) {
    // Everything was short: fall back to the longest run.
    const auto it = std::max_element(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    verbs.push_back(it->first);
  }
  return verbs;
}

bool VerbClassifier::matches(const Motion& m, const std::vector<int>& verb_ids) const {
  const auto got = classify(m);
  return std::set<int>(got.begin(), got.end()) == std::set<int>(verb_ids.begin(), verb_ids.end());
}

nlohmann::json VerbClassifier::to_json() const {
  nlohmann::json cents = nlohmann::json::array();
  for (const auto& c : centroids_) {
    cents.push_back(c);
  }
  return {{"mean", mean_}, {"scale", scale_}, {"centroids", cents}};
}

VerbClassifier VerbClassifier::from_json(const nlohmann::json& j) {
  VerbClassifier c;
  c.mean_ = j.at("mean").get<Features>();
  c.scale_ = j.at("scale").get<Features>();
  const auto cents = j.at("centroids").get<std::vector<Features>>();
  if (cents.size() != kVerbCount) {
    throw Error(ErrorKind::format, "classifier", "expected one centroid per verb");
  }
  std::copy(cents.begin(), cents.end(), c.centroids_.begin());
  return c;
}

}  // namespace mmm::data
