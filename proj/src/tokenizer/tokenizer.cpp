#include "mmm/tokenizer/tokenizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>

#include "mmm/error.hpp"
#include "mmm/numerics/checkpoint.hpp"

namespace mmm::vq {

using nn::Shape;

TokenizerConfig TokenizerConfig::full_scale() {
  TokenizerConfig c;
  c.K = 8192;
  c.d_lookup = 32;
  return c;
}

void TokenizerConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::value, "tokenizer_config", what); };
  if (in_dims < 1) bad("in_dims must be >= 1");
  if (K < 2) bad("K must be >= 2");
  if (d_lookup < 1 || d_model < 1) bad("widths must be positive");
  if (downsample < 2 || !std::has_single_bit(static_cast<unsigned>(downsample))) bad("downsample must be a power of two >= 2");
  if (!(beta > 0.0f)) bad("beta must be positive");
  if (ema_decay < 0.0f || ema_decay >= 1.0f) bad("ema_decay must lie in [0,1)");
  if (reset_every < 0) bad("reset_every must be >= 0 (0 disables)");
  if (!(reset_threshold > 0.0f)) bad("reset_threshold must be positive");
}

nlohmann::json TokenizerConfig::to_json() const {
  return {{"in_dims", in_dims},     {"K", K},
          {"d_lookup", d_lookup},   {"d_model", d_model},
          {"downsample", downsample}, {"beta", beta},
          {"ema_decay", ema_decay}, {"reset_every", reset_every},
          {"reset_threshold", reset_threshold}, {"l2_normalize", l2_normalize}};
}

TokenizerConfig TokenizerConfig::from_json(const nlohmann::json& j) {
  TokenizerConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "in_dims") c.in_dims = v.get<int>();
    else if (key == "K") c.K = v.get<int>();
    else if (key == "d_lookup") c.d_lookup = v.get<int>();
    else if (key == "d_model") c.d_model = v.get<int>();
    else if (key == "downsample") c.downsample = v.get<int>();
    else if (key == "beta") c.beta = v.get<float>();
    else if (key == "ema_decay") c.ema_decay = v.get<float>();
    else if (key == "reset_every") c.reset_every = v.get<int>();
    else if (key == "reset_threshold") c.reset_threshold = v.get<float>();
    else if (key == "l2_normalize") c.l2_normalize = v.get<bool>();
    else throw Error(ErrorKind::value, "config", "unknown key 'tokenizer." + key + "'");
  }
  c.validate();
  return c;
}

Tensor Tokenizer::ResBlock::operator()(const Tensor& x) const { return nn::add(x, c2(nn::relu(c1(nn::relu(x))))); }

Tokenizer::Tokenizer(const TokenizerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  nn::Rng rng(seed);
  const int W = cfg_.d_model;
  const int stages = std::countr_zero(static_cast<unsigned>(cfg_.downsample));
  enc_in_ = nn::Conv1d::make(params_, "enc.in", 3, cfg_.in_dims, W, 1, 1, 1, rng);
  for (int s = 0; s < stages; ++s) {
    const std::string p = "enc.stage" + std::to_string(s);
    enc_down_.push_back(nn::Conv1d::make(params_, p + ".down", 4, W, W, 2, 1, 1, rng));
    for (int r = 0; r < 2; ++r) {
      const std::string q = p + ".res" + std::to_string(r);
      enc_res_.push_back({nn::Conv1d::make(params_, q + ".c1", 3, W, W, 1, 1, 1, rng),
                          nn::Conv1d::make(params_, q + ".c2", 1, W, W, 1, 0, 0, rng)});
    }
  }
  enc_out_ = nn::Linear::make(params_, "enc.out", W, cfg_.d_lookup, rng);
  codebook_ = Codebook::make(params_, "codebook", cfg_.K, cfg_.d_lookup, rng);
  out_proj_ = nn::Linear::make(params_, "codebook.out_proj", cfg_.d_lookup, W, rng);
  for (int s = 0; s < stages; ++s) {
    const std::string p = "dec.stage" + std::to_string(s);
    for (int r = 0; r < 2; ++r) {
      const std::string q = p + ".res" + std::to_string(r);
      dec_res_.push_back({nn::Conv1d::make(params_, q + ".c1", 3, W, W, 1, 1, 1, rng),
                          nn::Conv1d::make(params_, q + ".c2", 1, W, W, 1, 0, 0, rng)});
    }
    dec_up_.push_back(nn::ConvTranspose1d::make(params_, p + ".up", 4, W, W, 2, 1, rng));
  }
  dec_out_ = nn::Conv1d::make(params_, "dec.out", 3, W, cfg_.in_dims, 1, 1, 1, rng);
  norm_mean_ = params_.add("norm.mean", Tensor::zeros({cfg_.in_dims}));
  norm_std_ = params_.add("norm.std", Tensor::full({cfg_.in_dims}, 1.0f));
}

void Tokenizer::set_stats(const data::NormStats& stats) {
  if (stats.mean.size() != static_cast<std::size_t>(cfg_.in_dims) || stats.std.size() != stats.mean.size()) {
    throw Error(ErrorKind::shape, "tokenizer", "statistics do not match in_dims=" + std::to_string(cfg_.in_dims));
  }
  std::copy(stats.mean.begin(), stats.mean.end(), norm_mean_.mutable_values().begin());
  std::copy(stats.std.begin(), stats.std.end(), norm_std_.mutable_values().begin());
}

data::NormStats Tokenizer::stats() const {
  return {{norm_mean_.values().begin(), norm_mean_.values().end()}, {norm_std_.values().begin(), norm_std_.values().end()}};
}

Tensor Tokenizer::encode(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != cfg_.in_dims) {
    throw Error(ErrorKind::shape, "encode", "expected [B,T," + std::to_string(cfg_.in_dims) + "], got " + nn::shape_str(x.shape()));
  }
  if (x.dim(1) % cfg_.downsample != 0) {
    throw Error(ErrorKind::value, "encode", std::to_string(x.dim(1)) + " frames not divisible by f=" + std::to_string(cfg_.downsample));
  }
  Tensor h = nn::relu(enc_in_(x));
  for (std::size_t s = 0; s < enc_down_.size(); ++s) {
    h = enc_down_[s](h);
    h = enc_res_[2 * s](h);
    h = enc_res_[2 * s + 1](h);
  }
  return enc_out_(nn::relu(h));
}

QuantizeResult Tokenizer::quantize(const Tensor& z) const {
  return vq::quantize(z, codebook_.entries, cfg_.beta, cfg_.l2_normalize);
}

Tensor Tokenizer::decode_latents(const Tensor& zq) const {
  Tensor h = out_proj_(zq);
  for (std::size_t s = 0; s < dec_up_.size(); ++s) {
    h = dec_res_[2 * s](h);
    h = dec_res_[2 * s + 1](h);
    h = dec_up_[s](h);
  }
  return dec_out_(nn::relu(h));
}

Tensor Tokenizer::decode_ids(std::span<const int> ids, int batch) const {
  if (batch < 1 || ids.empty() || ids.size() % static_cast<std::size_t>(batch) != 0) {
    throw Error(ErrorKind::shape, "decode", "token count not divisible into the batch");
  }
  for (int id : ids) {
    if (id < 0 || id >= cfg_.K) {
      throw Error(ErrorKind::value, "decode", "token " + std::to_string(id) + " outside [0," + std::to_string(cfg_.K) + ")");
    }
  }
  const int n = static_cast<int>(ids.size()) / batch;
  return decode_latents(nn::embedding(codebook_.entries, ids, {batch, n}));
}

std::vector<int> Tokenizer::tokenize(const data::Motion& raw) const {
  raw.validate("tokenize");
  if (raw.dims != cfg_.in_dims) {
    throw Error(ErrorKind::shape, "tokenize", "motion has " + std::to_string(raw.dims) + " dims, tokenizer expects " +
                                                  std::to_string(cfg_.in_dims));
  }
  const data::Motion m = data::normalize(raw, stats());
  const int f = cfg_.downsample;
  const int padded = (m.frames + f - 1) / f * f;
  std::vector<float> v(m.values);
  for (int t = m.frames; t < padded; ++t) {
    v.insert(v.end(), m.values.end() - m.dims, m.values.end());
  }
  nn::NoGradGuard no_grad;
  const Tensor z = encode(Tensor::from({1, padded, m.dims}, std::move(v)));
  return nearest_codes(z.values(), codebook_.entries, cfg_.l2_normalize);
}

data::Motion Tokenizer::detokenize(std::span<const int> ids, int frames, float fps) const {
  const int full = static_cast<int>(ids.size()) * cfg_.downsample;
  if (frames < 0) {
    frames = full;
  }
  if (frames < 1 || frames > full) {
    throw Error(ErrorKind::value, "detokenize", "cannot crop " + std::to_string(full) + " frames to " + std::to_string(frames));
  }
  nn::NoGradGuard no_grad;
  const Tensor y = decode_ids(ids, 1);
  data::Motion m(frames, cfg_.in_dims, fps);
  std::copy_n(y.values().begin(), static_cast<std::size_t>(frames) * cfg_.in_dims, m.values.begin());
  return data::denormalize(m, stats());
}

void Tokenizer::save(const std::filesystem::path& path, const nlohmann::json& meta) const {
  nlohmann::json cfg = {{"tokenizer", cfg_.to_json()}, {"meta", meta}};
  nn::save_checkpoint(path, kMagic, cfg, params_);
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path, kMagic);
  Tokenizer tok(TokenizerConfig::from_json(ck.config.at("tokenizer")), 0);
  nn::restore(tok.params_, ck);
  return tok;
}

void VqTrainConfig::validate(int downsample) const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::value, "vq_train_config", what); };
  if (steps < 1 || batch < 1 || epoch_steps < 1) bad("steps, batch and epoch_steps must be >= 1");
  if (window < downsample || window % downsample != 0) bad("window must be a positive multiple of f");
  if (!(lr > 0.0f) || diff_weight < 0.0f) bad("lr > 0 and diff_weight >= 0 required");
}

nlohmann::json VqTrainConfig::to_json() const {
  return {{"steps", steps}, {"batch", batch}, {"window", window}, {"lr", lr}, {"diff_weight", diff_weight}, {"epoch_steps", epoch_steps}};
}

VqTrainConfig VqTrainConfig::from_json(const nlohmann::json& j) {
  VqTrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "steps") c.steps = v.get<int>();
    else if (key == "batch") c.batch = v.get<int>();
    else if (key == "window") c.window = v.get<int>();
    else if (key == "lr") c.lr = v.get<float>();
    else if (key == "diff_weight") c.diff_weight = v.get<float>();
    else if (key == "epoch_steps") c.epoch_steps = v.get<int>();
    else throw Error(ErrorKind::value, "config", "unknown key 'vq_train." + key + "'");
  }
  return c;
}

Tensor sample_windows(const data::Dataset& ds, const std::vector<int>& items, int batch, int window, nn::Rng& rng,
                      std::span<const int> dims) {
  if (items.empty()) {
    throw Error(ErrorKind::value, "sample_windows", "no items to sample from");
  }
  std::vector<int> all;
  if (dims.empty()) {
    for (int d = 0; d < ds.cfg.dims(); ++d) {
      all.push_back(d);
    }
    dims = all;
  }
  const int C = static_cast<int>(dims.size());
  std::vector<float> out(static_cast<std::size_t>(batch) * window * C);
  for (int b = 0; b < batch; ++b) {
    const data::Motion& m = ds.items.at(static_cast<std::size_t>(items[rng.below(items.size())])).motion;
    const int slack = m.frames - window;
    const int start = slack > 0 ? static_cast<int>(rng.below(static_cast<std::uint64_t>(slack) + 1)) : 0;
    for (int t = 0; t < window; ++t) {
      const int src = std::min(start + t, m.frames - 1);
      for (int k = 0; k < C; ++k) {
        const int d = dims[static_cast<std::size_t>(k)];
        out[(static_cast<std::size_t>(b) * window + t) * C + k] =
            (m.at(src, d) - ds.stats.mean[static_cast<std::size_t>(d)]) / ds.stats.std[static_cast<std::size_t>(d)];
      }
    }
  }
  return Tensor::from({batch, window, C}, std::move(out));
}

VqStepResult tokenizer_step(Tokenizer& tok, nn::Adam& opt, const Tensor& x, long long step, float diff_weight,
                            nn::Rng& maint_rng) {
  const TokenizerConfig& tc = tok.config();
  const Tensor z = tok.encode(x);
  if (!std::all_of(z.values().begin(), z.values().end(), [](float v) { return std::isfinite(v); })) {
    throw Error(ErrorKind::diverged, "train_tokenizer", "non-finite encoder output at step " + std::to_string(step));
  }
  QuantizeResult q = tok.quantize(z);
  const Tensor xh = tok.decode_latents(q.z_q);
  const Tensor rec = nn::mse(xh, x);
  Tensor loss = nn::add(rec, q.loss);
  const int T = x.dim(1);
  if (T > 1 && diff_weight > 0.0f) {
    const Tensor dx = nn::sub(nn::narrow(x, 1, 1, T - 1), nn::narrow(x, 1, 0, T - 1));
    const Tensor dxh = nn::sub(nn::narrow(xh, 1, 1, T - 1), nn::narrow(xh, 1, 0, T - 1));
    loss = nn::add(loss, nn::scale(nn::mse(dxh, dx), diff_weight));
  }
  if (!std::isfinite(loss.item())) {
    throw Error(ErrorKind::diverged, "train_tokenizer", "non-finite loss at step " + std::to_string(step));
  }
  tok.params().zero_grad();
  loss.backward();
  opt.step();
  const auto m = tok.codebook().maintain(q.indices, z.values(), step, tc.ema_decay, tc.reset_every, tc.reset_threshold, maint_rng);
  return {loss.item(), rec.item(), q.loss.item(), q.perplexity, std::move(q.indices), m.resets};
}

std::vector<VqEpochMetrics> train_tokenizer(Tokenizer& tok, const data::Dataset& ds, const VqTrainConfig& cfg,
                                            std::uint64_t seed, const std::function<void(const VqEpochMetrics&)>& on_epoch,
                                            std::span<const int> dims) {
  const TokenizerConfig& tc = tok.config();
  cfg.validate(tc.downsample);
  std::vector<int> sel(dims.begin(), dims.end());
  if (sel.empty()) {
    for (int d = 0; d < ds.cfg.dims(); ++d) {
      sel.push_back(d);
    }
  }
  if (static_cast<int>(sel.size()) != tc.in_dims) {
    throw Error(ErrorKind::shape, "train_tokenizer", "tokenizer expects " + std::to_string(tc.in_dims) + " dims, got " +
                                                         std::to_string(sel.size()));
  }
  tok.set_stats(ds.stats.select(sel));
  nn::Rng rng(seed);
  nn::Rng maint_rng = rng.fork(1);
  nn::Adam opt(tok.params(), nn::AdamConfig{.lr = cfg.lr});
  std::vector<VqEpochMetrics> curve;
  VqEpochMetrics cur;
  std::vector<char> used(static_cast<std::size_t>(tc.K), 0);
  int in_epoch = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    const Tensor x = sample_windows(ds, ds.train, cfg.batch, cfg.window, rng, sel);
    const VqStepResult r = tokenizer_step(tok, opt, x, step, cfg.diff_weight, maint_rng);
    cur.recon_mse += r.recon_mse;
    cur.l_vq += r.l_vq;
    cur.perplexity += r.perplexity;
    cur.resets += r.resets;
    for (int i : r.indices) {
      used[static_cast<std::size_t>(i)] = 1;
    }
    if (++in_epoch == cfg.epoch_steps || step == cfg.steps) {
      cur.epoch = static_cast<int>(curve.size());
      cur.step = step;
      cur.recon_mse /= in_epoch;
      cur.l_vq /= in_epoch;
      cur.perplexity /= in_epoch;
      cur.utilization = static_cast<double>(std::count(used.begin(), used.end(), 1)) / tc.K;
      curve.push_back(cur);
      if (on_epoch) {
        on_epoch(cur);
      }
      cur = VqEpochMetrics{};
      std::fill(used.begin(), used.end(), 0);
      in_epoch = 0;
    }
  }
  return curve;
}

}  // namespace mmm::vq
