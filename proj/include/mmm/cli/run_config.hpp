#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmm/editing/editing.hpp"
#include "mmm/eval/eval.hpp"
#include "mmm/generate/generate.hpp"
#include "mmm/motiondata/corpus.hpp"
#include "mmm/tokenizer/tokenizer.hpp"
#include "mmm/transformer/transformer.hpp"

namespace mmm::cli {

struct DataSection {
  int items = 2000;
  data::SynthConfig synth;
};

struct TokenizerSection {
  vq::TokenizerConfig model;
  vq::VqTrainConfig train;
};

struct TransformerSection {
  tf::TransformerConfig model;
  tf::MaskedTrainConfig train;
};

struct EditingSection {
  edit::LongSequenceConfig long_sequence;
  edit::BodyEditConfig body;
  double inbetween_head = 0.25;
  double inbetween_tail = 0.25;
};

struct EvalSection {
  int n_samples = 200;
  int diversity_pairs = 300;
  int mmodality_prompts = 20;
  int mmodality_pairs = 10;
  std::vector<int> bench_lengths = {8, 16, 24, 32, 40, 48};
  int bench_repeats = 5;
  eval::ExtractorTrainConfig extractor;
};

/// Every tunable of a run. JSON form: one object per section
/// {data, tokenizer, transformer, schedule, sampling, editing, eval}; the
/// tokenizer and transformer sections nest their training settings under
/// "train".
struct RunConfig {
  DataSection data;
  TokenizerSection tokenizer;
  TransformerSection transformer;
  gen::ScheduleConfig schedule;
  gen::SamplingConfig sampling;
  EditingSection editing;
  EvalSection eval;

  /// Desk-scale defaults (narrow tokenizer and a 4-layer, 64-wide
  /// transformer) rather than the per-module defaults.
  static RunConfig defaults();

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing fields keep their defaults; unknown sections or keys throw
  /// ErrorKind::value.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);

  /// Overrides one field by dotted path, e.g. "transformer.train.steps".
  /// `value` is parsed as JSON, falling back to a plain string.
  void set(const std::string& path, const std::string& value);

  /// 16 hex digits of FNV-1a over the canonical JSON dump.
  std::string hash() const;
};

std::uint64_t fnv1a(const std::string& bytes);

}  // namespace mmm::cli
