#include "mmm/editing/editing.hpp"

#include <algorithm>

#include "mmm/error.hpp"

namespace mmm::edit {

gen::MaskLayout temporal_layout(std::span<const int> ids, std::span<const FrameRange> ranges, int f) {
  const int n = static_cast<int>(ids.size());
  std::vector<char> regenerate(static_cast<std::size_t>(n), 0);
  for (const FrameRange& r : ranges) {
    if (r.begin < 0 || r.end < r.begin || r.end > n * f) {
      throw Error(ErrorKind::value, "edit_temporal", "frame range [" + std::to_string(r.begin) + ", " +
                                                         std::to_string(r.end) + ") outside the motion");
    }
    if (r.end == r.begin) {
      continue;
    }
    // Outward snap: every token overlapping the range is regenerated.
    for (int t = r.begin / f; t < (r.end + f - 1) / f; ++t) {
      regenerate[static_cast<std::size_t>(t)] = 1;
    }
  }
  gen::MaskLayout m;
  m.length = n;
  for (int i = 0; i < n; ++i) {
    if (!regenerate[static_cast<std::size_t>(i)]) {
      m.conditions.push_back({i, ids[static_cast<std::size_t>(i)]});
    }
  }
  return m;
}

std::vector<FrameRange> inbetween_ranges(int frames, double head, double tail) {
  if (frames < 1 || head < 0.0 || tail < 0.0 || head + tail > 1.0) {
    throw Error(ErrorKind::value, "inbetween_ranges", "need frames >= 1 and head + tail <= 1");
  }
  const int b = static_cast<int>(std::lround(head * frames));
  const int e = frames - static_cast<int>(std::lround(tail * frames));
  if (e <= b) {
    return {};
  }
  return {{b, e}};
}

gen::DecodeResult decode_layout(const tf::Transformer& model, const gen::MaskLayout& layout, const std::string& prompt,
                                const gen::ScheduleConfig& sched, const gen::SamplingConfig& sampling,
                                std::uint64_t seed) {
  if (prompt.empty() && layout.conditions.empty()) {
    throw Error(ErrorKind::value, "edit", "nothing to condition on: no prompt and no kept tokens");
  }
  const tf::TextEmbedding text =
      prompt.empty() ? model.embed({tf::Transformer::null_words()}) : model.embed_text(prompt);
  gen::DecodeOptions opts;
  opts.conditions = layout.conditions;
  return gen::parallel_decode(model, text, layout.length, sched, sampling, seed, opts);
}

EditResult edit_temporal(const vq::Tokenizer& tok, const tf::Transformer& model, const data::Motion& motion,
                         std::span<const FrameRange> ranges, const std::string& prompt,
                         const gen::ScheduleConfig& sched, const gen::SamplingConfig& sampling, std::uint64_t seed) {
  if (tok.config().K != model.config().K) {
    throw Error(ErrorKind::value, "edit_temporal", "tokenizer and transformer disagree on K");
  }
  const std::vector<int> ids = tok.tokenize(motion);
  EditResult r;
  r.layout = temporal_layout(ids, ranges, tok.config().downsample);
  gen::DecodeResult d = decode_layout(model, r.layout, prompt, sched, sampling, seed);
  r.ids = std::move(d.ids);
  r.iterations = d.iterations;
  r.motion = tok.detokenize(r.ids, motion.frames, motion.fps);
  return r;
}

void LongSequenceConfig::validate() const {
  if (transition_tokens < 1) throw Error(ErrorKind::value, "long_sequence", "transition_tokens must be >= 1");
  if (context_tokens < 1) throw Error(ErrorKind::value, "long_sequence", "context_tokens must be >= 1");
}

LongSequence long_sequence(const vq::Tokenizer& tok, const tf::Transformer& model, const std::vector<std::string>& prompts,
                           const std::vector<int>& lengths, const LongSequenceConfig& cfg,
                           const gen::ScheduleConfig& sched, const gen::SamplingConfig& sampling, std::uint64_t seed) {
  cfg.validate();
  if (prompts.empty()) {
    throw Error(ErrorKind::value, "long_sequence", "no prompts");
  }
  if (!lengths.empty() && lengths.size() != prompts.size()) {
    throw Error(ErrorKind::value, "long_sequence", "one length per prompt required");
  }
  if (tok.config().K != model.config().K) {
    throw Error(ErrorKind::value, "long_sequence", "tokenizer and transformer disagree on K");
  }
  if (2 * cfg.context_tokens + cfg.transition_tokens > std::min(model.config().max_tokens, sched.M)) {
    throw Error(ErrorKind::value, "long_sequence", "transition layout exceeds the maximum token count");
  }
  std::vector<std::vector<int>> segments;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const tf::TextEmbedding text = model.embed_text(prompts[i]);
    const int L = lengths.empty() ? model.predict_length(text).front() : lengths[i];
    segments.push_back(gen::parallel_decode(model, text, L, sched, sampling, nn::Rng::derive(seed, 2 * i)).ids);
  }
  LongSequence out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    if (i > 0) {
      const auto& prev = segments[i - 1];
      const int tail = std::min<int>(cfg.context_tokens, static_cast<int>(prev.size()));
      const int head = std::min<int>(cfg.context_tokens, static_cast<int>(seg.size()));
      gen::MaskLayout layout;
      layout.length = tail + cfg.transition_tokens + head;
      for (int j = 0; j < tail; ++j) {
        layout.conditions.push_back({j, prev[prev.size() - static_cast<std::size_t>(tail - j)]});
      }
      for (int j = 0; j < head; ++j) {
        layout.conditions.push_back({tail + cfg.transition_tokens + j, seg[static_cast<std::size_t>(j)]});
      }
      const gen::DecodeResult d = decode_layout(model, layout, "", sched, sampling, nn::Rng::derive(seed, 2 * i + 1));
      out.ids.insert(out.ids.end(), d.ids.begin() + tail, d.ids.begin() + tail + cfg.transition_tokens);
      out.transition_iterations.push_back(d.iterations);
    }
    out.segment_starts.push_back(static_cast<int>(out.ids.size()));
    out.segment_lengths.push_back(static_cast<int>(seg.size()));
    out.ids.insert(out.ids.end(), seg.begin(), seg.end());
  }
  out.motion = tok.detokenize(out.ids);
  return out;
}

void UpperEditor::save(const std::filesystem::path& dir, const nlohmann::json& meta) const {
  std::filesystem::create_directories(dir);
  upper.save(dir / "upper_vq.ckpt", meta);
  lower.save(dir / "lower_vq.ckpt", meta);
  model.save(dir / "upper_tf.ckpt", meta);
}

UpperEditor UpperEditor::load(const std::filesystem::path& dir) {
  for (const char* f : {"upper_vq.ckpt", "lower_vq.ckpt", "upper_tf.ckpt"}) {
    if (!std::filesystem::exists(dir / f)) {
      throw Error(ErrorKind::io, "upper_body_edit", "missing upper-edit checkpoint " + (dir / f).string());
    }
  }
  vq::Tokenizer up = vq::Tokenizer::load(dir / "upper_vq.ckpt");
  vq::Tokenizer low = vq::Tokenizer::load(dir / "lower_vq.ckpt");
  tf::Transformer model = tf::Transformer::load(dir / "upper_tf.ckpt");
  const int joints = (up.config().in_dims + low.config().in_dims - data::kRootDims) / 3;
  data::BodySplit split = data::BodySplit::standard(joints);
  if (static_cast<int>(split.upper.size()) != up.config().in_dims ||
      static_cast<int>(split.lower.size()) != low.config().in_dims || model.config().K != up.config().K ||
      model.config().K_lower != low.config().K) {
    throw Error(ErrorKind::format, "upper_body_edit", "upper-edit checkpoints are inconsistent");
  }
  return {std::move(split), std::move(up), std::move(low), std::move(model)};
}

vq::TokenizerConfig half_tokenizer_config(const vq::TokenizerConfig& full, int dims) {
  if (full.d_lookup < 2 || full.d_lookup % 2 != 0) {
    throw Error(ErrorKind::value, "train_upper", "full-body d_lookup must be even to halve it");
  }
  vq::TokenizerConfig c = full;
  c.in_dims = dims;
  c.d_lookup = full.d_lookup / 2;
  c.validate();
  return c;
}

std::vector<tf::TokenItem> upper_token_items(const UpperEditor& ed, const data::Dataset& ds, const std::vector<int>& rows) {
  std::vector<tf::TokenItem> items;
  for (int r : rows) {
    const data::Item& it = ds.items.at(static_cast<std::size_t>(r));
    const data::SplitMotion sm = data::split_body(it.motion, ed.split);
    items.push_back({ed.upper.tokenize(sm.upper), ed.lower.tokenize(sm.lower), ed.model.words(it.prompt.text)});
  }
  return items;
}

UpperEditor train_upper(const data::Dataset& ds, const vq::TokenizerConfig& full_tok, const vq::VqTrainConfig& vq_train,
                        tf::TransformerConfig tf_cfg, const tf::MaskedTrainConfig& tf_train, std::uint64_t seed,
                        UpperTraining* log) {
  const int dims = data::dims_for_joints(ds.cfg.joints);
  if (full_tok.in_dims != dims) {
    throw Error(ErrorKind::value, "train_upper", "tokenizer in_dims " + std::to_string(full_tok.in_dims) +
                                                     " does not match the dataset's " + std::to_string(dims));
  }
  data::BodySplit split = data::BodySplit::standard(ds.cfg.joints);
  vq::Tokenizer up(half_tokenizer_config(full_tok, static_cast<int>(split.upper.size())), nn::Rng::derive(seed, 0));
  vq::Tokenizer low(half_tokenizer_config(full_tok, static_cast<int>(split.lower.size())), nn::Rng::derive(seed, 1));
  auto up_curve = vq::train_tokenizer(up, ds, vq_train, nn::Rng::derive(seed, 2), {}, split.upper);
  auto low_curve = vq::train_tokenizer(low, ds, vq_train, nn::Rng::derive(seed, 3), {}, split.lower);
  tf_cfg.K = up.config().K;
  tf_cfg.K_lower = low.config().K;
  UpperEditor ed{std::move(split), std::move(up), std::move(low), tf::Transformer(tf_cfg, nn::Rng::derive(seed, 4))};
  const auto train = upper_token_items(ed, ds, ds.train);
  const auto val = upper_token_items(ed, ds, ds.val);
  auto curve = tf::train_masked(ed.model, train, val, tf_train, nn::Rng::derive(seed, 5));
  if (log) {
    *log = {std::move(up_curve), std::move(low_curve), std::move(curve)};
  }
  return ed;
}

void BodyEditConfig::validate() const {
  if (!(lower_keep_fraction >= 0.0 && lower_keep_fraction <= 1.0)) {
    throw Error(ErrorKind::value, "upper_body_edit", "lower_keep_fraction must lie in [0,1]");
  }
}

UpperEditResult upper_body_edit(const UpperEditor& ed, const data::Motion& motion, const std::string& prompt,
                                const BodyEditConfig& cfg, const gen::ScheduleConfig& sched,
                                const gen::SamplingConfig& sampling, std::uint64_t seed) {
  cfg.validate();
  const data::SplitMotion sm = data::split_body(motion, ed.split);
  UpperEditResult r;
  r.lower_ids = ed.lower.tokenize(sm.lower);
  nn::Rng keep_rng(nn::Rng::derive(seed, 1));
  r.lower_canvas = r.lower_ids;
  for (int& t : r.lower_canvas) {
    if (!(keep_rng.uniform() < cfg.lower_keep_fraction)) {
      t = ed.model.config().K_lower;
    }
  }
  const tf::TextEmbedding text =
      prompt.empty() ? ed.model.embed({tf::Transformer::null_words()}) : ed.model.embed_text(prompt);
  gen::DecodeOptions opts;
  opts.lower = r.lower_canvas;
  r.upper_ids = gen::parallel_decode(ed.model, text, static_cast<int>(r.lower_ids.size()), sched, sampling,
                                     nn::Rng::derive(seed, 0), opts)
                    .ids;
  const data::Motion upper = ed.upper.detokenize(r.upper_ids, motion.frames, motion.fps);
  const data::Motion lower = ed.lower.detokenize(r.lower_ids, motion.frames, motion.fps);
  r.motion = data::join_body(upper, lower, ed.split);
  return r;
}

}  // namespace mmm::edit
