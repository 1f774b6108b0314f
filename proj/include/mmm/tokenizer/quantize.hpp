#pragma once

#include <span>
#include <vector>

#include "json.hpp"
#include "mmm/numerics/params.hpp"
#include "mmm/numerics/rng.hpp"

namespace mmm::vq {

using nn::Tensor;

/// Index of the nearest row of `entries` ([K,d]) for each of the n vectors
/// in `z` (n*d floats), by squared Euclidean distance; ties go to the lowest
/// index. With `l2_normalize` both sides are unit-normalised first.
std::vector<int> nearest_codes(std::span<const float> z, const Tensor& entries, bool l2_normalize = false);

struct QuantizeResult {
  std::vector<int> indices;
  Tensor codes;  // e, gathered from entries (differentiable w.r.t. entries)
  Tensor z_q;    // straight-through: z + sg(e - z)
  Tensor loss;   // ||sg(z) - e||^2 + beta ||z - sg(e)||^2, averaged over positions
  double perplexity = 0.0;
};

/// z [..., d]; entries [K, d].
QuantizeResult quantize(const Tensor& z, const Tensor& entries, float beta, bool l2_normalize = false);

/// exp(entropy) of the code histogram of `indices` over K codes.
double perplexity(std::span<const int> indices, int K);

/// Factorized codebook: lookup entries live in d_lookup dims with EMA
/// statistics; out_proj (owned by the tokenizer) maps them to model width.
struct Codebook {
  int K = 0;
  int d = 0;
  Tensor entries;    // [K, d]
  Tensor ema_count;  // [K]
  Tensor ema_sum;    // [K, d]
  Tensor uses;       // [K], assignments since the last reset

  static Codebook make(nn::ParamSet& ps, const std::string& name, int K, int d, nn::Rng& rng);

  struct Maintenance {
    int resets = 0;
  };

  /// EMA update from one batch (`assign[i]` is the code of z row i), then a
  /// dead-code reset when reset_every > 0 and iter % reset_every == 0.
  Maintenance maintain(std::span<const int> assign, std::span<const float> z, long long iter, float decay,
                       int reset_every, float reset_threshold, nn::Rng& rng);
};

inline constexpr float kEmaEpsilon = 1e-5f;

}  // namespace mmm::vq
