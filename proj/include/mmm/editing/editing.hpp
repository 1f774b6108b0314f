#pragma once

#include <string>
#include <vector>

#include "mmm/generate/generate.hpp"
#include "mmm/motiondata/corpus.hpp"

namespace mmm::edit {

/// Half-open frame range [begin, end).
struct FrameRange {
  int begin = 0;
  int end = 0;
};

/// Token layout for regenerating `ranges` of a motion of `n_tokens` tokens
/// (f frames each); ranges are snapped outward to token boundaries.
gen::MaskLayout temporal_layout(std::span<const int> ids, std::span<const FrameRange> ranges, int f);

/// Ranges that keep the first `head` and last `tail` fractions of the
/// frames and regenerate the middle.
std::vector<FrameRange> inbetween_ranges(int frames, double head, double tail);

struct EditResult {
  std::vector<int> ids;
  gen::MaskLayout layout;
  data::Motion motion;
  int iterations = 0;
};

/// Decodes a layout (conditions kept verbatim) under a prompt; an empty
/// prompt uses the null text. Throws when there is neither a prompt nor a
/// condition.
gen::DecodeResult decode_layout(const tf::Transformer& model, const gen::MaskLayout& layout, const std::string& prompt,
                                const gen::ScheduleConfig& sched, const gen::SamplingConfig& sampling,
                                std::uint64_t seed);

/// Regenerates the frame ranges of `motion` (in-betweening, outpainting,
/// completion). The output keeps the input's frame count.
EditResult edit_temporal(const vq::Tokenizer& tok, const tf::Transformer& model, const data::Motion& motion,
                         std::span<const FrameRange> ranges, const std::string& prompt,
                         const gen::ScheduleConfig& sched, const gen::SamplingConfig& sampling, std::uint64_t seed);

struct LongSequenceConfig {
  int transition_tokens = 4;
  int context_tokens = 6;  // kept tokens on each side of a transition
  void validate() const;
};

struct LongSequence {
  std::vector<int> ids;
  std::vector<int> segment_starts;  // first token of each prompt's segment
  std::vector<int> segment_lengths;
  std::vector<int> transition_iterations;
  data::Motion motion;
};

/// One segment per prompt (length from the length head unless `lengths` is
/// given), joined by transitions decoded under the null text from the
/// neighbouring segments' tail and head tokens.
LongSequence long_sequence(const vq::Tokenizer& tok, const tf::Transformer& model, const std::vector<std::string>& prompts,
                           const std::vector<int>& lengths, const LongSequenceConfig& cfg,
                           const gen::ScheduleConfig& sched, const gen::SamplingConfig& sampling, std::uint64_t seed);

/// Split tokenizers plus a dual-stream transformer that generates upper-body
/// tokens conditioned on lower-body tokens and text.
struct UpperEditor {
  data::BodySplit split;
  vq::Tokenizer upper;
  vq::Tokenizer lower;
  tf::Transformer model;

  void save(const std::filesystem::path& dir, const nlohmann::json& meta = {}) const;
  static UpperEditor load(const std::filesystem::path& dir);
};

/// Body-part tokenizer config derived from the full-body one: `dims` input
/// features and half the lookup width.
vq::TokenizerConfig half_tokenizer_config(const vq::TokenizerConfig& full, int dims);

/// Tokenizes every item of `rows` into upper/lower streams for the editor.
std::vector<tf::TokenItem> upper_token_items(const UpperEditor& ed, const data::Dataset& ds, const std::vector<int>& rows);

struct UpperTraining {
  std::vector<vq::VqEpochMetrics> upper_curve;
  std::vector<vq::VqEpochMetrics> lower_curve;
  std::vector<tf::MaskedEval> curve;
};

/// Trains both half tokenizers on their body parts, then the dual-stream
/// transformer (upper tokens masked with r ~ U(alpha,1), lower tokens masked
/// independently with probability rho, upper tokens predicted).
UpperEditor train_upper(const data::Dataset& ds, const vq::TokenizerConfig& full_tok, const vq::VqTrainConfig& vq_train,
                        tf::TransformerConfig tf_cfg, const tf::MaskedTrainConfig& tf_train, std::uint64_t seed,
                        UpperTraining* log = nullptr);

struct BodyEditConfig {
  double lower_keep_fraction = 1.0;
  void validate() const;
};

struct UpperEditResult {
  std::vector<int> upper_ids;
  std::vector<int> lower_ids;      // tokens of the input lower body
  std::vector<int> lower_canvas;   // lower stream seen by the model (K_lower = MASK)
  data::Motion motion;             // generated upper body joined with the input's lower body
};

/// Keeps each lower-body token with probability lower_keep_fraction (the
/// rest are MASK for every iteration) and generates the upper body.
UpperEditResult upper_body_edit(const UpperEditor& ed, const data::Motion& motion, const std::string& prompt,
                                const BodyEditConfig& cfg, const gen::ScheduleConfig& sched,
                                const gen::SamplingConfig& sampling, std::uint64_t seed);

}  // namespace mmm::edit
