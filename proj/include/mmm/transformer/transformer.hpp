#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmm/numerics/layers.hpp"
#include "mmm/numerics/optim.hpp"

namespace mmm::tf {

using nn::Tensor;

struct TransformerConfig {
  int K = 512;        // motion codes; ids K, K+1, K+2 are MASK, PAD, END
  int K_lower = 0;    // > 0 adds a second (lower-body) input stream
  int max_tokens = 49;
  int d_model = 128;
  int layers = 6;
  int n_cross_attn = 1;
  int heads = 4;
  int ff_mult = 4;
  float alpha = 0.5f;      // mask ratio r ~ U(alpha, 1)
  float dropout = 0.1f;
  float text_drop = 0.1f;  // probability of training on the null prompt
  int max_words = 32;      // longer prompts are truncated
  bool all_position_loss = false;

  int vocab() const { return K + 3; }
  int mask_id() const { return K; }
  int pad_id() const { return K + 1; }
  int end_id() const { return K + 2; }
  void validate() const;
  nlohmann::json to_json() const;
  static TransformerConfig from_json(const nlohmann::json& j);
};

/// Sentence vectors [B,d] and padded word vectors [B,W,d]; `word_mask` is
/// the additive key mask (0 or -inf) of the padded word slots.
struct TextEmbedding {
  Tensor sentence;
  Tensor words;
  std::vector<float> word_mask;
  int batch = 0;
  int max_words = 0;
};

/// Token canvas of B sequences of equal padded length S (<= max_tokens):
/// motion tokens, then END when the sequence is shorter than max_tokens,
/// then PAD.
struct Canvas {
  int batch = 0;
  int length = 0;
  std::vector<int> tokens;  // B*S
  std::vector<int> lower;   // B*S, dual-stream models only
};

/// Lays out one sequence of motion ids (possibly containing MASK) padded to
/// `length` slots.
std::vector<int> layout_tokens(std::span<const int> ids, int length, const TransformerConfig& cfg, bool lower = false);

/// Text-conditioned masked token transformer. The sentence vector is the
/// first sequence element; the first n_cross_attn layers cross-attend to the
/// word vectors (with learned word positions) in place of self-attention.
class Transformer {
 public:
  Transformer(const TransformerConfig& cfg, std::uint64_t seed);

  static inline constexpr const char* kMagic = "MMMTF1";
  static Transformer load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path, const nlohmann::json& meta = {}) const;

  const TransformerConfig& config() const noexcept { return cfg_; }
  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }

  /// Word ids of a prompt (unknown words map to the OOV bucket). Throws on
  /// a prompt without words.
  std::vector<int> words(const std::string& prompt) const;
  /// Word ids of the null prompt.
  static std::vector<int> null_words() { return {kNullWord}; }

  /// Batched text encoding; each entry is a word-id list from words() or
  /// null_words().
  TextEmbedding embed(const std::vector<std::vector<int>>& word_lists) const;
  TextEmbedding embed_text(const std::string& prompt) const { return embed({words(prompt)}); }

  /// Logits [B, S, K+3] for every canvas slot. `train_rng` enables dropout.
  Tensor forward(const TextEmbedding& text, const Canvas& canvas, nn::Rng* train_rng = nullptr) const;

  /// Predicted token count in [1, max_tokens] per batch row.
  std::vector<int> predict_length(const TextEmbedding& text) const;
  /// Raw length-head output (fraction of max_tokens), [B,1].
  Tensor length_head(const TextEmbedding& text) const;

  static constexpr int kNullWord = 0;
  static constexpr int kOovWord = 1;

 private:
  struct Block {
    nn::LayerNorm ln1;
    nn::Linear q, k, v, o;
    nn::LayerNorm ln2;
    nn::Linear ff1, ff2;
    bool cross = false;
  };

  TransformerConfig cfg_;
  nn::ParamSet params_;
  std::vector<std::string> vocab_;
  Tensor word_table_;
  Tensor word_pos_;
  nn::Linear sentence_proj_;
  Tensor tok_table_;
  Tensor lower_table_;
  Tensor pos_table_;
  std::vector<Block> blocks_;
  nn::LayerNorm ln_out_;
  nn::Linear head_;
  nn::Linear len1_, len2_;
};

/// Result of masking one sequence.
struct Corruption {
  std::vector<int> tokens;
  std::vector<int> positions;  // ascending
};

/// Replaces exactly ceil(r * ids.size()) positions, drawn uniformly without
/// replacement, by `mask_id`.
Corruption corrupt(std::span<const int> ids, double r, int mask_id, nn::Rng& rng);
/// Number of positions corrupt() masks.
int mask_count(double r, int length);

/// One training example: motion token ids (and lower-body ids for a
/// dual-stream model) plus the prompt's word ids.
struct TokenItem {
  std::vector<int> ids;
  std::vector<int> lower;
  std::vector<int> words;
};

struct MaskedTrainConfig {
  int steps = 3000;
  int batch = 32;
  float lr = 5e-4f;
  int warmup = 100;
  float weight_decay = 0.01f;
  float length_weight = 1.0f;
  float rho = 0.1f;  // lower-stream corruption probability (dual stream)
  int eval_every = 250;
  void validate() const;
  nlohmann::json to_json() const;
  static MaskedTrainConfig from_json(const nlohmann::json& j);
};

struct MaskedEval {
  int step = 0;
  double train_loss = 0.0;  // mean over the steps since the previous report
  double val_loss = 0.0;
  double val_acc = 0.0;     // top-1 over masked motion positions
  double val_length_mae = 0.0;
};

/// Builds a training batch: r ~ U(alpha, 1) masking of the (upper) stream,
/// END targets, optional lower-stream corruption with probability rho and
/// null-prompt substitution with probability text_drop.
struct TrainBatch {
  Canvas canvas;
  std::vector<int> targets;  // B*S, -1 where no loss applies
  std::vector<std::vector<int>> words;
  std::vector<float> lengths;  // true length / max_tokens
  std::vector<float> length_weight;
};
TrainBatch make_batch(const Transformer& model, const std::vector<TokenItem>& items, std::span<const int> rows,
                      float rho, nn::Rng& rng, bool allow_text_drop = true);

/// Masked cross-entropy plus weighted length regression.
struct LossParts {
  Tensor total;
  Tensor token;
  Tensor length;
  Tensor logits;
};
LossParts batch_loss(const Transformer& model, const TrainBatch& b, float length_weight, nn::Rng* train_rng);

/// Deterministic validation: fixed corruption seed, no dropout, no text drop.
MaskedEval evaluate_masked(const Transformer& model, const std::vector<TokenItem>& items, float rho,
                           std::uint64_t seed);

/// Trains in place. Deterministic given `seed`; throws ErrorKind::diverged
/// on a non-finite loss.
std::vector<MaskedEval> train_masked(Transformer& model, const std::vector<TokenItem>& train,
                                     const std::vector<TokenItem>& val, const MaskedTrainConfig& cfg,
                                     std::uint64_t seed, const std::function<void(const MaskedEval&)>& on_eval = {});

}  // namespace mmm::tf
