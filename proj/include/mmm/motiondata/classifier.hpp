#pragma once

#include <array>
#include <vector>

#include "json.hpp"
#include "mmm/motiondata/corpus.hpp"

namespace mmm::data {

/// Nearest-centroid verb classifier over hand-crafted window features of raw
/// (unnormalized) motion: root speed, angular speed, hand variance, hand
/// height, root height mean / spread / slope, foot stepping spread.
///
/// A motion is read as a sequence of windows; consecutive windows with the
/// same label form runs and runs shorter than kMinRun windows are dropped
/// as transition noise.
class VerbClassifier {
 public:
  static constexpr int kFeatures = 8;
  static constexpr int kWindow = 20;
  static constexpr int kStride = 5;
  static constexpr int kMinRun = 4;
  using Features = std::array<float, kFeatures>;

  /// Fits on windows lying inside a single primitive of the listed items.
  static VerbClassifier fit(const Dataset& ds, const std::vector<int>& indices);

  static Features window_features(const Motion& m, int start, int length);
  int classify_window(const Motion& m, int start, int length) const;
  /// Verb sequence read from the motion (adjacent duplicates merged).
  std::vector<int> classify(const Motion& m) const;
  /// Classified verb set equals the set of `verb_ids`.
  bool matches(const Motion& m, const std::vector<int>& verb_ids) const;

  nlohmann::json to_json() const;
  static VerbClassifier from_json(const nlohmann::json& j);

 private:
  Features mean_{};
  Features scale_{};
  std::array<Features, kVerbCount> centroids_{};
};

}  // namespace mmm::data
