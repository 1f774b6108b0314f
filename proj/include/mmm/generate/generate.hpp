#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmm/motiondata/motion.hpp"
#include "mmm/numerics/rng.hpp"
#include "mmm/tokenizer/tokenizer.hpp"
#include "mmm/transformer/transformer.hpp"

namespace mmm::gen {

enum class ScheduleKind { cosine, linear, square_root };

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::cosine;
  int T = 10;
  int M = 49;
  void validate() const;
  nlohmann::json to_json() const;
  static ScheduleConfig from_json(const nlohmann::json& j);
};

std::string to_string(ScheduleKind k);
ScheduleKind schedule_kind_from_string(const std::string& s);

/// Iteration budget for a sequence of L tokens: max(1, round(T*L/M)), with
/// halves rounded up.
int t_dyn(int L, const ScheduleConfig& cfg);

/// Tokens still masked after iteration t of t_dyn(L): ceil(gamma(t/T_dyn)*L)
/// clamped to [0, L]. gamma is cos(pi x / 2), 1 - x or 1 - x^2.
int n_masks(int t, int L, const ScheduleConfig& cfg);

enum class SamplingKind { temperature, top_k, top_p };

struct SamplingConfig {
  SamplingKind kind = SamplingKind::temperature;
  double beta = 1.0;    // temperature, applied for every kind
  double k_frac = 1.0;  // top_k keeps ceil(k_frac * K) codes
  double p = 1.0;       // top_p keeps the smallest prefix with mass > p
  bool gumbel = false;  // perturb decode confidences with annealed Gumbel noise
  void validate() const;
  nlohmann::json to_json() const;
  static SamplingConfig from_json(const nlohmann::json& j);
};

std::string to_string(SamplingKind k);
SamplingKind sampling_kind_from_string(const std::string& s);

/// Renormalized sampling distribution over the K motion codes of one logits
/// row (zero outside the kept support).
std::vector<double> sampling_distribution(std::span<const float> code_logits, const SamplingConfig& cfg);

struct Sample {
  int token = 0;
  double confidence = 0.0;  // renormalized probability of `token`
};
Sample sample_token(std::span<const float> code_logits, const SamplingConfig& cfg, nn::Rng& rng);

/// A pre-fixed condition token.
struct Condition {
  int pos = 0;
  int token = 0;
};

/// Decoding canvas of `length` tokens; `conditions` are never remasked.
struct MaskLayout {
  int length = 0;
  std::vector<Condition> conditions;

  nlohmann::json to_json() const;
  static MaskLayout from_json(const nlohmann::json& j);
};

struct DecodeStep {
  int t = 0;
  int fixed_free = 0;  // generated positions fixed after this iteration
  int masked = 0;      // MASK count after this iteration
  std::vector<int> canvas;  // ids after this iteration, MASK where not yet fixed
};

struct DecodeResult {
  std::vector<int> ids;
  std::vector<DecodeStep> trace;
  int iterations = 0;
};

struct DecodeOptions {
  std::vector<Condition> conditions;
  /// Lower-body stream of a dual-stream model; entries equal to K_lower are
  /// MASK and stay MASK throughout.
  std::vector<int> lower;
};

/// Confidence-based iterative decoding of L tokens. Each iteration samples
/// every masked position, then remasks the n_masks(t+1, L_free) lowest
/// confidence ones and fixes the rest for good.
DecodeResult parallel_decode(const tf::Transformer& model, const tf::TextEmbedding& text, int L,
                             const ScheduleConfig& sched, const SamplingConfig& sampling, std::uint64_t seed,
                             const DecodeOptions& opts = {});

struct Generated {
  std::vector<int> ids;
  data::Motion motion;
  int iterations = 0;
};

/// prompt -> (predicted) length -> tokens -> raw motion of L*f frames. An
/// empty prompt uses the null text.
Generated text_to_motion(const vq::Tokenizer& tok, const tf::Transformer& model, const std::string& prompt,
                         std::optional<int> L, const ScheduleConfig& sched, const SamplingConfig& sampling,
                         std::uint64_t seed);

}  // namespace mmm::gen
