#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmm/generate/generate.hpp"
#include "mmm/motiondata/classifier.hpp"
#include "mmm/motiondata/corpus.hpp"
#include "mmm/numerics/layers.hpp"

namespace mmm::eval {

/// One feature vector per row.
using Features = std::vector<std::vector<double>>;

/// Frechet distance between Gaussians fitted to two feature sets:
/// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), covariances regularized by
/// 1e-6 I. The trace of the square root comes from the eigenvalues of the
/// symmetric product S1^(1/2) S2 S1^(1/2).
double frechet_distance(const Features& a, const Features& b);

struct Diversity {
  double value = 0.0;
  bool with_replacement = false;  // n_pairs exceeded floor(N/2)
};

/// Mean Euclidean distance over `n_pairs` disjoint random pairs.
Diversity diversity(const Features& feats, int n_pairs, nn::Rng& rng);

/// Mean over prompts of the mean distance within `pairs` pairs of
/// generations; `sample(prompt, seed)` must be deterministic per seed.
double mmodality(const std::function<std::vector<double>(const std::string&, std::uint64_t)>& sample,
                 const std::vector<std::string>& prompts, int pairs, std::uint64_t seed);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct AitsRow {
  int L = 0;
  double mean_seconds = 0.0;
  double cv = 0.0;  // coefficient of variation over repeats
};

/// Wall-clock decode time per length (one warm-up decode first; model
/// loading is outside the timed region).
std::vector<AitsRow> aits_bench(const tf::Transformer& model, const std::vector<int>& lengths, int repeats,
                                const gen::ScheduleConfig& sched, const gen::SamplingConfig& sampling,
                                std::uint64_t seed, const std::string& prompt = "a figure walks forward");

/// Fraction of motions whose classified verb set equals the verbs of the
/// matching prompt.
double alignment_accuracy(const data::VerbClassifier& clf, const std::vector<data::Motion>& motions,
                          const std::vector<std::vector<int>>& verb_ids);

/// Per-dim mean/std of consecutive-frame differences over the listed items.
/// This is the jump scale: a pose channel that swings quickly (feet during a
/// run) moves about one pose std per frame, so pose std would hide splices.
data::NormStats frame_delta_stats(const data::Dataset& ds, const std::vector<int>& items);
/// Largest per-dim absolute change between consecutive frames, divided by
/// `scale.std` (normally frame_delta_stats); one value per frame pair.
std::vector<double> frame_jumps(const data::Motion& m, const data::NormStats& scale);
/// q-quantile (0..1, nearest rank) of frame_jumps over the listed items.
double corpus_jump_quantile(const data::Dataset& ds, const std::vector<int>& items, const data::NormStats& scale,
                            double q);
/// Largest jump across the frame pairs (s-1, s) for each seam frame s.
double seam_jump(const data::Motion& m, const std::vector<int>& seams, const data::NormStats& scale);

/// Small frozen motion encoder: two causal conv layers (kernel 3, width 32)
/// with ReLU; features are the time-mean of the second layer. Trained once
/// to predict the next frame.
class FeatureExtractor {
 public:
  static constexpr int kWidth = 32;
  static constexpr int kKernel = 3;
  static inline constexpr const char* kMagic = "MMMFX1";

  FeatureExtractor(int in_dims, std::uint64_t seed);

  static FeatureExtractor load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path, const nlohmann::json& meta = {}) const;

  int in_dims() const noexcept { return in_dims_; }
  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }
  std::uint64_t hash() const { return nn::hash_values(params_); }
  void set_stats(const data::NormStats& stats);

  /// Per-frame hidden states [B,T,32] of normalized input [B,T,C].
  nn::Tensor hidden(const nn::Tensor& x) const;
  /// Next-frame prediction loss on normalized input [B,T,C], T >= 2.
  nn::Tensor loss(const nn::Tensor& x) const;
  std::vector<double> features(const data::Motion& raw) const;
  Features features(const std::vector<data::Motion>& raw) const;

 private:
  int in_dims_;
  nn::ParamSet params_;
  nn::Conv1d c1_, c2_;
  nn::Linear head_;
  nn::Tensor mean_, std_;
};

struct ExtractorTrainConfig {
  int steps = 1500;
  int batch = 16;
  int window = 48;
  float lr = 1e-3f;
};

/// Trains on the dataset's train split (normalization from its stats).
FeatureExtractor train_feature_extractor(const data::Dataset& ds, const ExtractorTrainConfig& cfg, std::uint64_t seed);

/// 16 lowercase hex digits.
std::string hex_hash(std::uint64_t v);

/// Path of the feature extractor shipped in the repository's assets.
std::filesystem::path shipped_extractor_path();

struct EvalReport {
  double fid = 0.0;
  double diversity = 0.0;
  bool diversity_with_replacement = false;
  double mmodality = 0.0;
  double alignment_acc = 0.0;
  double aits = 0.0;
  std::string config_hash;
  std::string extractor_hash;
  std::uint64_t seed = 0;
  int n_samples = 0;

  /// Throws ErrorKind::value when a metric is not finite.
  nlohmann::json to_json() const;
};

}  // namespace mmm::eval
