#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmm/motiondata/motion.hpp"

namespace mmm::data {

enum class Verb : int { walk, run, turn, wave, sit, jump };
enum class Direction : int { forward, backward, left, right };
inline constexpr int kVerbCount = 6;
inline constexpr int kDirectionCount = 4;

const char* verb_name(Verb v);  // "WALK", "RUN", ...
/// Verb phrase without subject, e.g. "walks to the left".
std::string phrase(Verb v, Direction d);
/// Frames a primitive lasts before jitter.
int nominal_frames(Verb v);

struct Primitive {
  Verb verb = Verb::walk;
  Direction dir = Direction::forward;
  int frames = 0;
};

/// "a figure <phrase> then <phrase> ..."
std::string render_prompt(const std::vector<Primitive>& prims);
/// Lower-cased alphanumeric words of a prompt.
std::vector<std::string> split_words(const std::string& text);
/// Every word the grammar can emit, sorted and unique.
std::vector<std::string> grammar_vocabulary();

struct SynthConfig {
  int joints = kDefaultJoints;
  float fps = 20.0f;
  int min_len = 40;
  int max_len = 196;
  int downsample = 4;
  int max_primitives = 3;
  float noise = 0.01f;
  float jitter = 0.15f;  // relative duration jitter per primitive
  float train_frac = 0.8f;
  float val_frac = 0.05f;

  int dims() const { return dims_for_joints(joints); }
  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct PromptSpec {
  std::string text;
  std::vector<int> verb_ids;
  std::vector<int> direction_ids;
  int target_frames = 0;
};

struct Item {
  Motion motion;  // raw (unnormalized) features
  PromptSpec prompt;
  std::vector<int> primitive_frames;  // per-primitive lengths, summing to motion.frames
};

struct Dataset {
  SynthConfig cfg;
  std::uint64_t seed = 0;
  std::vector<Item> items;
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
  NormStats stats;  // fitted on the train split only
};

/// Renders a primitive sequence into raw features. Root height during SIT
/// is noise-free and non-increasing; other channels carry Gaussian noise.
Motion render_primitives(const std::vector<Primitive>& prims, const SynthConfig& cfg, std::uint64_t seed);
/// Draws 1..max_primitives primitives (no verb repeated back-to-back) and
/// their jittered durations, clamped so the total lies in [min_len, max_len].
std::vector<Primitive> draw_primitives(const SynthConfig& cfg, std::uint64_t seed);
Item synth_item(const SynthConfig& cfg, std::uint64_t item_seed);
Dataset synth_dataset(int n_items, std::uint64_t seed, const SynthConfig& cfg);

/// Writes `dir/dataset.json` plus `dir/motions/<id>.mmot`.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir, const std::vector<std::string>& provenance = {});
Dataset load_dataset(const std::filesystem::path& dir);

std::vector<const Motion*> motions_of(const Dataset& ds, const std::vector<int>& indices);

}  // namespace mmm::data
