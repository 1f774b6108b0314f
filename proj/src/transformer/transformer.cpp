#include "mmm/transformer/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mmm/error.hpp"
#include "mmm/motiondata/corpus.hpp"
#include "mmm/numerics/checkpoint.hpp"

namespace mmm::tf {

namespace {

constexpr float kNegInf = -std::numeric_limits<float>::infinity();
constexpr float kEmbedStd = 0.02f;

}  // namespace

void TransformerConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::value, "transformer_config", what); };
  if (K < 2) bad("K must be >= 2");
  if (K_lower < 0) bad("K_lower must be >= 0");
  if (max_tokens < 1) bad("max_tokens must be >= 1");
  if (layers < 1 || n_cross_attn < 0 || n_cross_attn > layers) bad("need 0 <= n_cross_attn <= layers, layers >= 1");
  if (heads < 1 || d_model % heads != 0) bad("d_model must be divisible by heads");
  if (K_lower > 0 && d_model % 2 != 0) bad("dual-stream models need an even d_model");
  if (ff_mult < 1) bad("ff_mult must be >= 1");
  if (!(alpha >= 0.0f && alpha < 1.0f)) bad("alpha must lie in [0,1)");
  if (!(dropout >= 0.0f && dropout < 1.0f)) bad("dropout must lie in [0,1)");
  if (!(text_drop >= 0.0f && text_drop <= 1.0f)) bad("text_drop must lie in [0,1]");
  if (max_words < 1) bad("max_words must be >= 1");
}

nlohmann::json TransformerConfig::to_json() const {
  return {{"K", K},
          {"K_lower", K_lower},
          {"max_tokens", max_tokens},
          {"d_model", d_model},
          {"layers", layers},
          {"n_cross_attn", n_cross_attn},
          {"heads", heads},
          {"ff_mult", ff_mult},
          {"alpha", alpha},
          {"dropout", dropout},
          {"text_drop", text_drop},
          {"max_words", max_words},
          {"all_position_loss", all_position_loss}};
}

TransformerConfig TransformerConfig::from_json(const nlohmann::json& j) {
  TransformerConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "K") c.K = v.get<int>();
    else if (key == "K_lower") c.K_lower = v.get<int>();
    else if (key == "max_tokens") c.max_tokens = v.get<int>();
    else if (key == "d_model") c.d_model = v.get<int>();
    else if (key == "layers") c.layers = v.get<int>();
    else if (key == "n_cross_attn") c.n_cross_attn = v.get<int>();
    else if (key == "heads") c.heads = v.get<int>();
    else if (key == "ff_mult") c.ff_mult = v.get<int>();
    else if (key == "alpha") c.alpha = v.get<float>();
    else if (key == "dropout") c.dropout = v.get<float>();
    else if (key == "text_drop") c.text_drop = v.get<float>();
    else if (key == "max_words") c.max_words = v.get<int>();
    else if (key == "all_position_loss") c.all_position_loss = v.get<bool>();
    else throw Error(ErrorKind::value, "config", "unknown key 'transformer." + key + "'");
  }
  c.validate();
  return c;
}

std::vector<int> layout_tokens(std::span<const int> ids, int length, const TransformerConfig& cfg, bool lower) {
  const int K = lower ? cfg.K_lower : cfg.K;
  const int n = static_cast<int>(ids.size());
  if (n < 1 || n > cfg.max_tokens) {
    throw Error(ErrorKind::value, "layout_tokens",
                std::to_string(n) + " tokens outside [1, " + std::to_string(cfg.max_tokens) + "]");
  }
  const int needed = n < cfg.max_tokens ? n + 1 : n;
  if (length < needed || length > cfg.max_tokens) {
    throw Error(ErrorKind::value, "layout_tokens", "canvas length " + std::to_string(length) + " cannot hold " +
                                                        std::to_string(n) + " tokens");
  }
  std::vector<int> out(ids.begin(), ids.end());
  if (n < cfg.max_tokens) {
    out.push_back(K + 2);
  }
  out.resize(static_cast<std::size_t>(length), K + 1);
  return out;
}

Transformer::Transformer(const TransformerConfig& cfg, std::uint64_t seed) : cfg_(cfg), vocab_(data::grammar_vocabulary()) {
  cfg_.validate();
  nn::Rng rng(seed);
  const int d = cfg_.d_model;
  word_table_ = params_.add("text.words", nn::init_normal({static_cast<int>(vocab_.size()) + 2, d}, 1.0f, rng));
  word_pos_ = params_.add("text.pos", nn::init_normal({cfg_.max_words, d}, kEmbedStd, rng));
  sentence_proj_ = nn::Linear::make(params_, "text.sentence", d, d, rng);
  // One extra row per table is the type embedding of the sentence slot.
  const int d_tok = cfg_.K_lower > 0 ? d / 2 : d;
  tok_table_ = params_.add("tok.embed", nn::init_normal({cfg_.vocab() + 1, d_tok}, kEmbedStd, rng));
  if (cfg_.K_lower > 0) {
    lower_table_ = params_.add("tok.lower_embed", nn::init_normal({cfg_.K_lower + 4, d - d_tok}, kEmbedStd, rng));
  }
  pos_table_ = params_.add("tok.pos", nn::init_normal({cfg_.max_tokens + 1, d}, kEmbedStd, rng));
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "block" + std::to_string(l);
    Block b;
    b.cross = l < cfg_.n_cross_attn;
    b.ln1 = nn::LayerNorm::make(params_, p + ".ln1", d);
    b.q = nn::Linear::make(params_, p + ".q", d, d, rng);
    b.k = nn::Linear::make(params_, p + ".k", d, d, rng);
    b.v = nn::Linear::make(params_, p + ".v", d, d, rng);
    b.o = nn::Linear::make(params_, p + ".o", d, d, rng);
    b.ln2 = nn::LayerNorm::make(params_, p + ".ln2", d);
    b.ff1 = nn::Linear::make(params_, p + ".ff1", d, d * cfg_.ff_mult, rng);
    b.ff2 = nn::Linear::make(params_, p + ".ff2", d * cfg_.ff_mult, d, rng);
    blocks_.push_back(std::move(b));
  }
  ln_out_ = nn::LayerNorm::make(params_, "out.ln", d);
  head_ = nn::Linear::make(params_, "out.head", d, cfg_.vocab(), rng, true, kEmbedStd);
  len1_ = nn::Linear::make(params_, "length.l1", d, d, rng);
  len2_ = nn::Linear::make(params_, "length.l2", d, 1, rng);
}

std::vector<int> Transformer::words(const std::string& prompt) const {
  const auto tokens = data::split_words(prompt);
  if (tokens.empty()) {
    throw Error(ErrorKind::value, "embed_text", "prompt has no words");
  }
  std::vector<int> ids;
  for (const auto& w : tokens) {
    if (static_cast<int>(ids.size()) == cfg_.max_words) {
      break;
    }
    const auto it = std::lower_bound(vocab_.begin(), vocab_.end(), w);
    ids.push_back(it != vocab_.end() && *it == w ? 2 + static_cast<int>(it - vocab_.begin()) : kOovWord);
  }
  return ids;
}

TextEmbedding Transformer::embed(const std::vector<std::vector<int>>& word_lists) const {
  const int B = static_cast<int>(word_lists.size());
  if (B < 1) {
    throw Error(ErrorKind::value, "embed_text", "empty batch");
  }
  const int n_words = static_cast<int>(word_table_.dim(0));
  int W = 1;
  for (const auto& l : word_lists) {
    if (l.empty() || static_cast<int>(l.size()) > cfg_.max_words) {
      throw Error(ErrorKind::value, "embed_text", "word list size must lie in [1, max_words]");
    }
    W = std::max(W, static_cast<int>(l.size()));
  }
  const int d = cfg_.d_model;
  std::vector<int> ids(static_cast<std::size_t>(B) * W, kNullWord);
  TextEmbedding t;
  t.batch = B;
  t.max_words = W;
  t.word_mask.assign(ids.size(), kNegInf);
  std::vector<float> avg(static_cast<std::size_t>(B) * B * W, 0.0f);
  for (int b = 0; b < B; ++b) {
    const auto& l = word_lists[static_cast<std::size_t>(b)];
    const float inv = 1.0f / static_cast<float>(l.size());
    for (std::size_t j = 0; j < l.size(); ++j) {
      if (l[j] < 0 || l[j] >= n_words) {
        throw Error(ErrorKind::value, "embed_text", "word id " + std::to_string(l[j]) + " out of range");
      }
      const std::size_t slot = static_cast<std::size_t>(b) * W + j;
      ids[slot] = l[j];
      t.word_mask[slot] = 0.0f;
      avg[static_cast<std::size_t>(b) * B * W + slot] = inv;
    }
  }
  t.words = nn::embedding(word_table_, ids, {B, W});
  const Tensor mean = nn::matmul(Tensor::from({B, B * W}, std::move(avg)), nn::reshape(t.words, {B * W, d}));
  t.sentence = sentence_proj_(mean);
  return t;
}

Tensor Transformer::forward(const TextEmbedding& text, const Canvas& canvas, nn::Rng* train_rng) const {
  const int B = canvas.batch;
  const int S = canvas.length;
  const int d = cfg_.d_model;
  const bool dual = cfg_.K_lower > 0;
  if (B < 1 || S < 1 || S > cfg_.max_tokens) {
    throw Error(ErrorKind::value, "forward", "canvas length " + std::to_string(S) + " outside [1, " +
                                                 std::to_string(cfg_.max_tokens) + "]");
  }
  if (canvas.tokens.size() != static_cast<std::size_t>(B) * S || (dual && canvas.lower.size() != canvas.tokens.size())) {
    throw Error(ErrorKind::shape, "forward", "canvas token count does not match batch x length");
  }
  if (text.batch != B) {
    throw Error(ErrorKind::shape, "forward", "text batch " + std::to_string(text.batch) + " vs canvas batch " +
                                                 std::to_string(B));
  }
  const int V = cfg_.vocab();
  const int Vl = cfg_.K_lower + 3;
  std::vector<int> ids(static_cast<std::size_t>(B) * (S + 1));
  std::vector<int> lids(dual ? ids.size() : 0);
  std::vector<float> key_mask(ids.size(), 0.0f);
  std::vector<float> scatter(ids.size() * B, 0.0f);
  for (int b = 0; b < B; ++b) {
    const std::size_t row = static_cast<std::size_t>(b) * (S + 1);
    ids[row] = V;
    scatter[row * B + b] = 1.0f;
    if (dual) {
      lids[row] = Vl;
    }
    for (int s = 0; s < S; ++s) {
      const int tok = canvas.tokens[static_cast<std::size_t>(b) * S + s];
      if (tok < 0 || tok >= V) {
        throw Error(ErrorKind::value, "forward", "token " + std::to_string(tok) + " outside [0," + std::to_string(V) + ")");
      }
      ids[row + 1 + s] = tok;
      key_mask[row + 1 + s] = tok == cfg_.pad_id() ? kNegInf : 0.0f;
      if (dual) {
        const int lt = canvas.lower[static_cast<std::size_t>(b) * S + s];
        if (lt < 0 || lt >= Vl) {
          throw Error(ErrorKind::value, "forward", "lower token " + std::to_string(lt) + " out of range");
        }
        lids[row + 1 + s] = lt;
      }
    }
  }
  auto drop = [&](const Tensor& x) { return train_rng ? nn::dropout(x, cfg_.dropout, *train_rng) : x; };

  Tensor h = nn::embedding(tok_table_, ids, {B, S + 1});
  if (dual) {
    h = nn::concat_last(h, nn::embedding(lower_table_, lids, {B, S + 1}));
  }
  const Tensor sent = nn::matmul(Tensor::from({B * (S + 1), B}, std::move(scatter)), text.sentence);
  h = nn::add(h, nn::reshape(sent, {B, S + 1, d}));
  h = drop(nn::add(h, nn::narrow(pos_table_, 0, 0, S + 1)));

  Tensor words_in;
  if (cfg_.n_cross_attn > 0) {
    if (text.max_words > cfg_.max_words) {
      throw Error(ErrorKind::shape, "forward", "more words than max_words");
    }
    words_in = nn::add(text.words, nn::narrow(word_pos_, 0, 0, text.max_words));
  }
  for (const Block& blk : blocks_) {
    const Tensor x = blk.ln1(h);
    Tensor a;
    if (blk.cross) {
      a = nn::attention(blk.q(x), blk.k(words_in), blk.v(words_in), cfg_.heads, text.word_mask);
    } else {
      a = nn::attention(blk.q(x), blk.k(x), blk.v(x), cfg_.heads, key_mask);
    }
    h = nn::add(h, drop(blk.o(a)));
    h = nn::add(h, drop(blk.ff2(nn::relu(blk.ff1(blk.ln2(h))))));
  }
  return head_(ln_out_(nn::narrow(h, 1, 1, S)));
}

Tensor Transformer::length_head(const TextEmbedding& text) const {
  return len2_(nn::relu(len1_(text.sentence)));
}

std::vector<int> Transformer::predict_length(const TextEmbedding& text) const {
  nn::NoGradGuard no_grad;
  const Tensor out = length_head(text);
  std::vector<int> lens;
  for (float v : out.values()) {
    const double l = std::isfinite(v) ? std::round(static_cast<double>(v) * cfg_.max_tokens) : 1.0;
    lens.push_back(static_cast<int>(std::clamp(l, 1.0, static_cast<double>(cfg_.max_tokens))));
  }
  return lens;
}

void Transformer::save(const std::filesystem::path& path, const nlohmann::json& meta) const {
  nn::save_checkpoint(path, kMagic, {{"transformer", cfg_.to_json()}, {"vocabulary", vocab_}, {"meta", meta}}, params_);
}

Transformer Transformer::load(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path, kMagic);
  Transformer t(TransformerConfig::from_json(ck.config.at("transformer")), 0);
  const auto vocab = ck.config.at("vocabulary").get<std::vector<std::string>>();
  if (vocab != t.vocab_) {
    throw Error(ErrorKind::format, "load_transformer", path.string() + ": word vocabulary differs from this build");
  }
  nn::restore(t.params_, ck);
  return t;
}

int mask_count(double r, int length) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw Error(ErrorKind::value, "corrupt", "ratio must lie in [0,1]");
  }
  // Snap products within 1e-9 of an integer so e.g. 0.7 * 10 counts 7.
  const double x = r * length;
  const double nearest = std::round(x);
  const double c = std::abs(x - nearest) < 1e-9 ? nearest : std::ceil(x);
  return static_cast<int>(std::clamp(c, 0.0, static_cast<double>(length)));
}

Corruption corrupt(std::span<const int> ids, double r, int mask_id, nn::Rng& rng) {
  const int L = static_cast<int>(ids.size());
  const int n = mask_count(r, L);
  std::vector<int> order(static_cast<std::size_t>(L));
  for (int i = 0; i < L; ++i) {
    order[static_cast<std::size_t>(i)] = i;
  }
  // Partial Fisher-Yates: the first n entries are a uniform n-subset.
  for (int i = 0; i < n; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(L - i)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  Corruption c{{ids.begin(), ids.end()}, {order.begin(), order.begin() + n}};
  std::sort(c.positions.begin(), c.positions.end());
  for (int p : c.positions) {
    c.tokens[static_cast<std::size_t>(p)] = mask_id;
  }
  return c;
}

void MaskedTrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::value, "masked_train_config", what); };
  if (steps < 1 || batch < 1 || eval_every < 1) bad("steps, batch and eval_every must be >= 1");
  if (!(lr > 0.0f) || warmup < 0 || weight_decay < 0.0f || length_weight < 0.0f) bad("lr > 0, warmup/decay/weights >= 0");
  if (!(rho >= 0.0f && rho <= 1.0f)) bad("rho must lie in [0,1]");
}

nlohmann::json MaskedTrainConfig::to_json() const {
  return {{"steps", steps},           {"batch", batch},   {"lr", lr},
          {"warmup", warmup},         {"weight_decay", weight_decay},
          {"length_weight", length_weight}, {"rho", rho}, {"eval_every", eval_every}};
}

MaskedTrainConfig MaskedTrainConfig::from_json(const nlohmann::json& j) {
  MaskedTrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "steps") c.steps = v.get<int>();
    else if (key == "batch") c.batch = v.get<int>();
    else if (key == "lr") c.lr = v.get<float>();
    else if (key == "warmup") c.warmup = v.get<int>();
    else if (key == "weight_decay") c.weight_decay = v.get<float>();
    else if (key == "length_weight") c.length_weight = v.get<float>();
    else if (key == "rho") c.rho = v.get<float>();
    else if (key == "eval_every") c.eval_every = v.get<int>();
    else throw Error(ErrorKind::value, "config", "unknown key 'transformer_train." + key + "'");
  }
  return c;
}

TrainBatch make_batch(const Transformer& model, const std::vector<TokenItem>& items, std::span<const int> rows,
                      float rho, nn::Rng& rng, bool allow_text_drop) {
  const TransformerConfig& cfg = model.config();
  const bool dual = cfg.K_lower > 0;
  const int B = static_cast<int>(rows.size());
  int S = 1;
  for (int r : rows) {
    const int L = static_cast<int>(items.at(static_cast<std::size_t>(r)).ids.size());
    S = std::max(S, std::min(L + 1, cfg.max_tokens));
  }
  TrainBatch tb;
  tb.canvas.batch = B;
  tb.canvas.length = S;
  tb.targets.assign(static_cast<std::size_t>(B) * S, -1);
  for (int b = 0; b < B; ++b) {
    const TokenItem& it = items[static_cast<std::size_t>(rows[static_cast<std::size_t>(b)])];
    const int L = static_cast<int>(it.ids.size());
    if (dual && it.lower.size() != it.ids.size()) {
      throw Error(ErrorKind::shape, "make_batch", "upper and lower token streams differ in length");
    }
    const double r = cfg.alpha + (1.0 - cfg.alpha) * rng.uniform();
    const Corruption c = corrupt(it.ids, r, cfg.mask_id(), rng);
    const auto toks = layout_tokens(c.tokens, S, cfg);
    tb.canvas.tokens.insert(tb.canvas.tokens.end(), toks.begin(), toks.end());
    int* tgt = tb.targets.data() + static_cast<std::size_t>(b) * S;
    if (cfg.all_position_loss) {
      std::copy(it.ids.begin(), it.ids.end(), tgt);
    } else {
      for (int p : c.positions) {
        tgt[p] = it.ids[static_cast<std::size_t>(p)];
      }
    }
    if (L < cfg.max_tokens) {
      tgt[L] = cfg.end_id();
    }
    if (dual) {
      std::vector<int> low = it.lower;
      for (int& t : low) {
        if (rng.uniform() < rho) {
          t = cfg.K_lower;
        }
      }
      const auto lt = layout_tokens(low, S, cfg, true);
      tb.canvas.lower.insert(tb.canvas.lower.end(), lt.begin(), lt.end());
    }
    const bool drop_text = allow_text_drop && cfg.text_drop > 0.0f && rng.uniform() < cfg.text_drop;
    tb.words.push_back(drop_text ? Transformer::null_words() : it.words);
    tb.lengths.push_back(static_cast<float>(L) / cfg.max_tokens);
    tb.length_weight.push_back(drop_text ? 0.0f : 1.0f);
  }
  return tb;
}

LossParts batch_loss(const Transformer& model, const TrainBatch& b, float length_weight, nn::Rng* train_rng) {
  const TextEmbedding text = model.embed(b.words);
  LossParts lp;
  lp.logits = model.forward(text, b.canvas, train_rng);
  lp.token = nn::cross_entropy(lp.logits, b.targets);
  const int B = b.canvas.batch;
  const Tensor diff = nn::sub(model.length_head(text), Tensor::from({B, 1}, b.lengths));
  float wsum = 0.0f;
  for (float w : b.length_weight) {
    wsum += w;
  }
  lp.length = nn::scale(nn::sum(nn::mul(nn::mul(diff, diff), Tensor::from({B, 1}, b.length_weight))),
                        1.0f / std::max(wsum, 1.0f));
  lp.total = nn::add(lp.token, nn::scale(lp.length, length_weight));
  return lp;
}

MaskedEval evaluate_masked(const Transformer& model, const std::vector<TokenItem>& items, float rho,
                           std::uint64_t seed) {
  MaskedEval ev;
  if (items.empty()) {
    return ev;
  }
  nn::NoGradGuard no_grad;
  nn::Rng rng(seed);
  const TransformerConfig& cfg = model.config();
  const int V = cfg.vocab();
  double loss_sum = 0.0;
  long long loss_n = 0;
  long long correct = 0;
  long long masked = 0;
  double mae = 0.0;
  constexpr int kChunk = 64;
  for (std::size_t start = 0; start < items.size(); start += kChunk) {
    std::vector<int> rows;
    for (std::size_t i = start; i < std::min(items.size(), start + kChunk); ++i) {
      rows.push_back(static_cast<int>(i));
    }
    const TrainBatch tb = make_batch(model, items, rows, rho, rng, false);
    const LossParts lp = batch_loss(model, tb, 0.0f, nullptr);
    long long valid = 0;
    for (int t : tb.targets) {
      valid += t >= 0;
    }
    loss_sum += static_cast<double>(lp.token.item()) * valid;
    loss_n += valid;
    const float* lg = lp.logits.values().data();
    for (std::size_t i = 0; i < tb.targets.size(); ++i) {
      const int t = tb.targets[i];
      if (t < 0 || t >= cfg.K || tb.canvas.tokens[i] != cfg.mask_id()) {
        continue;
      }
      const float* row = lg + i * static_cast<std::size_t>(V);
      correct += static_cast<int>(std::max_element(row, row + V) - row) == t;
      ++masked;
    }
    const auto lens = model.predict_length(model.embed(tb.words));
    for (std::size_t b = 0; b < rows.size(); ++b) {
      mae += std::abs(lens[b] - static_cast<int>(items[static_cast<std::size_t>(rows[b])].ids.size()));
    }
  }
  ev.val_loss = loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0;
  ev.val_acc = masked ? static_cast<double>(correct) / static_cast<double>(masked) : 0.0;
  ev.val_length_mae = mae / static_cast<double>(items.size());
  return ev;
}

std::vector<MaskedEval> train_masked(Transformer& model, const std::vector<TokenItem>& train,
                                     const std::vector<TokenItem>& val, const MaskedTrainConfig& cfg,
                                     std::uint64_t seed, const std::function<void(const MaskedEval&)>& on_eval) {
  cfg.validate();
  if (train.empty()) {
    throw Error(ErrorKind::value, "train_masked", "no training items");
  }
  nn::Rng rng(seed);
  nn::Rng drop_rng = rng.fork(1);
  const std::uint64_t eval_seed = nn::Rng::derive(seed, 2);
  nn::Adam opt(model.params(), nn::AdamConfig{.lr = cfg.lr, .weight_decay = cfg.weight_decay});
  std::vector<MaskedEval> curve;
  double loss_acc = 0.0;
  int loss_n = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    // Linear warmup, then cosine decay to a tenth of the peak rate.
    double lr = cfg.lr;
    if (step <= cfg.warmup) {
      lr *= static_cast<double>(step) / cfg.warmup;
    } else {
      const double u = static_cast<double>(step - cfg.warmup) / std::max(1, cfg.steps - cfg.warmup);
      lr *= 0.1 + 0.45 * (1.0 + std::cos(std::numbers::pi * u));
    }
    opt.set_lr(static_cast<float>(lr));
    std::vector<int> rows(static_cast<std::size_t>(cfg.batch));
    for (int& r : rows) {
      r = static_cast<int>(rng.below(train.size()));
    }
    const TrainBatch tb = make_batch(model, train, rows, cfg.rho, rng);
    const LossParts lp = batch_loss(model, tb, cfg.length_weight, &drop_rng);
    if (!std::isfinite(lp.total.item())) {
      throw Error(ErrorKind::diverged, "train_masked", "non-finite loss at step " + std::to_string(step));
    }
    model.params().zero_grad();
    lp.total.backward();
    opt.step();
    loss_acc += lp.token.item();
    ++loss_n;
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      MaskedEval ev = evaluate_masked(model, val, cfg.rho, eval_seed);
      ev.step = step;
      ev.train_loss = loss_acc / loss_n;
      loss_acc = 0.0;
      loss_n = 0;
      curve.push_back(ev);
      if (on_eval) {
        on_eval(ev);
      }
    }
  }
  return curve;
}

}  // namespace mmm::tf
