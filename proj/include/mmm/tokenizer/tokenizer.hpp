#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"
#include "mmm/motiondata/corpus.hpp"
#include "mmm/numerics/layers.hpp"
#include "mmm/numerics/optim.hpp"
#include "mmm/tokenizer/quantize.hpp"

namespace mmm::vq {

struct TokenizerConfig {
  int in_dims = 16;
  int K = 512;
  int d_lookup = 8;
  int d_model = 128;  // conv width and code embedding width
  int downsample = 4;
  float beta = 0.25f;
  float ema_decay = 0.99f;
  int reset_every = 20;  // 0 disables resets
  float reset_threshold = 1.0f;
  bool l2_normalize = false;

  /// Full-scale codebook (8192 x 32).
  static TokenizerConfig full_scale();
  void validate() const;
  nlohmann::json to_json() const;
  static TokenizerConfig from_json(const nlohmann::json& j);
};

/// Stage-1 motion tokenizer. Encoder: conv(k3) then two stride-2 stages of
/// [conv k4 s2 + 2 residual blocks], then a linear map to the lookup space.
/// Decoder mirrors it: code embedding (entries -> out_proj), two stages of
/// [2 residual blocks + transposed conv k4 s2], conv(k3) to features.
class Tokenizer {
 public:
  Tokenizer(const TokenizerConfig& cfg, std::uint64_t seed);

  static inline constexpr const char* kMagic = "MMMVQ1";
  static Tokenizer load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path, const nlohmann::json& meta = {}) const;

  const TokenizerConfig& config() const noexcept { return cfg_; }
  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }
  Codebook& codebook() noexcept { return codebook_; }
  const Codebook& codebook() const noexcept { return codebook_; }

  /// Normalization statistics of the training corpus (stored in checkpoints).
  void set_stats(const data::NormStats& stats);
  data::NormStats stats() const;

  /// x [B,T,C] normalized; T must be divisible by the downsample factor.
  Tensor encode(const Tensor& x) const;
  QuantizeResult quantize(const Tensor& z) const;
  /// Decoder from lookup-space vectors [B,n,d_lookup] to [B,n*f,C].
  Tensor decode_latents(const Tensor& zq) const;
  /// ids of `batch` equal-length sequences, row-major.
  Tensor decode_ids(std::span<const int> ids, int batch) const;

  /// Raw motion -> tokens: normalize, right-pad with the last frame to a
  /// multiple of f, encode, quantize.
  std::vector<int> tokenize(const data::Motion& raw) const;
  /// Tokens -> raw motion of `frames` frames (default ids.size()*f).
  data::Motion detokenize(std::span<const int> ids, int frames = -1, float fps = 20.0f) const;

 private:
  struct ResBlock {
    nn::Conv1d c1;
    nn::Conv1d c2;
    Tensor operator()(const Tensor& x) const;
  };

  TokenizerConfig cfg_;
  nn::ParamSet params_;
  Codebook codebook_;
  nn::Conv1d enc_in_;
  std::vector<nn::Conv1d> enc_down_;
  std::vector<ResBlock> enc_res_;
  nn::Linear enc_out_;
  nn::Linear out_proj_;
  std::vector<ResBlock> dec_res_;
  std::vector<nn::ConvTranspose1d> dec_up_;
  nn::Conv1d dec_out_;
  Tensor norm_mean_;
  Tensor norm_std_;
};

struct VqTrainConfig {
  int steps = 3000;
  int batch = 16;
  int window = 48;      // frames per training crop (multiple of f)
  float lr = 1e-3f;
  float diff_weight = 1.0f;
  int epoch_steps = 100;  // metrics and utilization are reported per epoch of this many steps
  void validate(int downsample) const;
  nlohmann::json to_json() const;
  static VqTrainConfig from_json(const nlohmann::json& j);
};

struct VqEpochMetrics {
  int epoch = 0;
  int step = 0;
  double recon_mse = 0.0;   // plain MSE on normalized features, epoch mean
  double l_vq = 0.0;
  double perplexity = 0.0;  // mean per-batch perplexity
  double utilization = 0.0; // fraction of codes assigned at least once in the epoch
  int resets = 0;
};

struct VqStepResult {
  double loss = 0.0;
  double recon_mse = 0.0;
  double l_vq = 0.0;
  double perplexity = 0.0;
  std::vector<int> indices;
  int resets = 0;
};

/// One optimizer step on batch x [B,T,C]: reconstruction + first-difference
/// MSE + L_VQ, Adam update, then codebook maintenance with iteration `step`.
VqStepResult tokenizer_step(Tokenizer& tok, nn::Adam& opt, const Tensor& x, long long step, float diff_weight,
                            nn::Rng& maint_rng);

/// Crops one training batch [B, window, |dims|] of normalized frames from
/// the listed items, keeping only feature `dims` (all when empty). Items
/// shorter than the window are right-padded with their final frame.
Tensor sample_windows(const data::Dataset& ds, const std::vector<int>& items, int batch, int window, nn::Rng& rng,
                      std::span<const int> dims = {});

/// Trains in place on the train split (restricted to `dims` when given, for
/// body-part tokenizers). Sets the tokenizer's normalization stats from the
/// dataset. Deterministic given `seed`; throws ErrorKind::diverged on a
/// non-finite loss.
std::vector<VqEpochMetrics> train_tokenizer(Tokenizer& tok, const data::Dataset& ds, const VqTrainConfig& cfg,
                                            std::uint64_t seed,
                                            const std::function<void(const VqEpochMetrics&)>& on_epoch = {},
                                            std::span<const int> dims = {});

}  // namespace mmm::vq
