#include <filesystem>

#include "doctest.h"
#include "mmm/editing/editing.hpp"
#include "mmm/error.hpp"
#include "mmm/numerics/params.hpp"

using namespace mmm;

namespace {

tf::TransformerConfig toy_tf(int K = 32, int K_lower = 0) {
  tf::TransformerConfig c;
  c.K = K;
  c.K_lower = K_lower;
  c.d_model = 32;
  c.layers = 2;
  c.heads = 2;
  c.ff_mult = 2;
  return c;
}

vq::TokenizerConfig toy_vq(int dims, int K = 32) {
  vq::TokenizerConfig c;
  c.in_dims = dims;
  c.K = K;
  c.d_model = 32;
  return c;
}

data::Motion sample_motion(std::uint64_t seed, int frames) {
  data::SynthConfig sc;
  data::Motion m = data::synth_item(sc, seed).motion;
  data::Motion out(std::min(frames, m.frames), m.dims, m.fps);
  std::copy_n(m.values.begin(), out.values.size(), out.values.begin());
  return out;
}

// Briefly trained half tokenizers (so distinct motions get distinct codes)
// and an essentially untrained dual-stream transformer.
edit::UpperEditor toy_editor() {
  const data::Dataset ds = data::synth_dataset(40, 3, data::SynthConfig{});
  vq::VqTrainConfig vt;
  vt.steps = 150;
  vt.epoch_steps = 50;
  tf::MaskedTrainConfig mt;
  mt.steps = 1;
  mt.batch = 2;
  return edit::train_upper(ds, toy_vq(16), vt, toy_tf(), mt, 1);
}

}  // namespace

TEST_CASE("frame ranges snap outward to token boundaries") {
  const std::vector<int> ids = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto regenerated = [&](std::vector<edit::FrameRange> r) {
    const auto m = edit::temporal_layout(ids, r, 4);
    std::vector<int> gen;
    std::size_t c = 0;
    for (int i = 0; i < 10; ++i) {
      if (c < m.conditions.size() && m.conditions[c].pos == i) {
        CHECK(m.conditions[c].token == ids[i]);
        ++c;
      } else {
        gen.push_back(i);
      }
    }
    return gen;
  };
  CHECK(regenerated({{5, 9}}) == std::vector<int>{1, 2});
  CHECK(regenerated({{4, 8}}) == std::vector<int>{1});
  CHECK(regenerated({{3, 3}}).empty());
  CHECK(regenerated({}).empty());
  CHECK(regenerated({{0, 2}, {37, 40}}) == std::vector<int>{0, 9});
  CHECK_THROWS_AS(edit::temporal_layout(ids, std::vector<edit::FrameRange>{{0, 41}}, 4), Error);
  CHECK_THROWS_AS(edit::temporal_layout(ids, std::vector<edit::FrameRange>{{5, 4}}, 4), Error);
  const auto mid = edit::inbetween_ranges(100, 0.25, 0.25);
  REQUIRE(mid.size() == 1);
  CHECK(mid[0].begin == 25);
  CHECK(mid[0].end == 75);
  CHECK(edit::inbetween_ranges(100, 0.5, 0.5).empty());
  CHECK_THROWS_AS(edit::inbetween_ranges(100, 0.7, 0.5), Error);
}

TEST_CASE("temporal editing") {
  const tf::Transformer model(toy_tf(), 4);
  const vq::Tokenizer tok(toy_vq(16), 5);
  const gen::ScheduleConfig sched;
  const gen::SamplingConfig samp;
  const data::Motion motion = sample_motion(6, 98);
  const auto ids = tok.tokenize(motion);
  REQUIRE(ids.size() == 25);

  SUBCASE("no edit range is the tokenizer round trip") {
    const auto r = edit::edit_temporal(tok, model, motion, {}, "", sched, samp, 1);
    CHECK(r.ids == ids);
    CHECK(r.iterations == 0);
    CHECK(r.motion == tok.detokenize(ids, motion.frames, motion.fps));
  }
  SUBCASE("in-betweening keeps the conditioned tokens") {
    const auto ranges = edit::inbetween_ranges(motion.frames, 0.25, 0.25);
    for (const std::string prompt : {"", "a figure waves"}) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto r = edit::edit_temporal(tok, model, motion, ranges, prompt, sched, samp, seed);
        CHECK(r.motion.frames == motion.frames);
        for (const auto& c : r.layout.conditions) {
          REQUIRE(r.ids[c.pos] == c.token);
          REQUIRE(ids[c.pos] == c.token);
        }
        // Frames 25..73 -> tokens 6..18 regenerated.
        CHECK(r.layout.conditions.size() == 25 - 13);
      }
    }
  }
  SUBCASE("regenerating everything needs a prompt") {
    const std::vector<edit::FrameRange> all = {{0, motion.frames}};
    CHECK_THROWS_AS(edit::edit_temporal(tok, model, motion, all, "", sched, samp, 1), Error);
    const auto r = edit::edit_temporal(tok, model, motion, all, "a figure jumps", sched, samp, 1);
    CHECK(r.layout.conditions.empty());
    CHECK(r.ids.size() == 25);
  }
}

TEST_CASE("long sequences") {
  const tf::Transformer model(toy_tf(), 7);
  const vq::Tokenizer tok(toy_vq(16), 8);
  const gen::ScheduleConfig sched;
  const gen::SamplingConfig samp;
  edit::LongSequenceConfig cfg;
  const std::vector<std::string> prompts = {"a figure walks forward", "a figure sits down", "a figure waves"};
  const std::vector<int> lengths = {8, 10, 12};
  const auto ls = edit::long_sequence(tok, model, prompts, lengths, cfg, sched, samp, 11);
  CHECK(ls.ids.size() == 30 + 2 * 4);
  CHECK(ls.motion.frames == 4 * static_cast<int>(ls.ids.size()));
  CHECK(ls.transition_iterations == std::vector<int>{1, 1});
  CHECK(ls.segment_starts == std::vector<int>{0, 12, 26});
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto alone = gen::parallel_decode(model, model.embed_text(prompts[i]), lengths[i], sched, samp,
                                            nn::Rng::derive(11, 2 * i));
    const auto begin = ls.ids.begin() + ls.segment_starts[i];
    CHECK(std::vector<int>(begin, begin + lengths[i]) == alone.ids);
  }
  CHECK(edit::long_sequence(tok, model, prompts, lengths, cfg, sched, samp, 11).ids == ls.ids);
  CHECK_THROWS_AS(edit::long_sequence(tok, model, {}, {}, cfg, sched, samp, 1), Error);
  CHECK_THROWS_AS(edit::long_sequence(tok, model, prompts, {3}, cfg, sched, samp, 1), Error);
  cfg.transition_tokens = 0;
  CHECK_THROWS_AS(edit::long_sequence(tok, model, prompts, lengths, cfg, sched, samp, 1), Error);
}

TEST_CASE("upper-body editing") {
  const auto ed = toy_editor();
  const gen::ScheduleConfig sched;
  const gen::SamplingConfig samp;
  const data::Motion a = sample_motion(20, 96);
  const data::Motion b = sample_motion(21, 96);
  edit::BodyEditConfig keep_all;
  const auto full = edit::upper_body_edit(ed, a, "a figure waves", keep_all, sched, samp, 5);
  CHECK(full.lower_canvas == full.lower_ids);
  CHECK(full.upper_ids.size() == 24);
  const auto lower_rt = ed.lower.detokenize(ed.lower.tokenize(data::split_body(a, ed.split).lower), a.frames, a.fps);
  CHECK(data::split_body(full.motion, ed.split).lower == lower_rt);

  edit::BodyEditConfig none;
  none.lower_keep_fraction = 0.0;
  const auto na = edit::upper_body_edit(ed, a, "a figure waves", none, sched, samp, 5);
  const auto nb = edit::upper_body_edit(ed, b, "a figure waves", none, sched, samp, 5);
  CHECK(na.lower_ids != nb.lower_ids);
  CHECK(na.upper_ids == nb.upper_ids);
  for (int t : na.lower_canvas) {
    CHECK(t == ed.model.config().K_lower);
  }

  edit::BodyEditConfig half;
  half.lower_keep_fraction = 0.5;
  const auto h = edit::upper_body_edit(ed, a, "a figure waves", half, sched, samp, 5);
  const int kept = static_cast<int>(std::count_if(h.lower_canvas.begin(), h.lower_canvas.end(),
                                                  [&](int t) { return t != ed.model.config().K_lower; }));
  CHECK(kept > 0);
  CHECK(kept < 24);
  CHECK(h.upper_ids != full.upper_ids);
  CHECK(h.upper_ids != na.upper_ids);

  edit::BodyEditConfig bad;
  bad.lower_keep_fraction = 1.5;
  CHECK_THROWS_AS(edit::upper_body_edit(ed, a, "", bad, sched, samp, 1), Error);
  auto odd = toy_vq(16);
  odd.d_lookup = 3;
  CHECK_THROWS_AS(edit::half_tokenizer_config(odd, 6), Error);
}

TEST_CASE("dual-stream transformer overfits eight items") {
  auto cfg = toy_tf(32, 32);
  cfg.max_tokens = 12;
  cfg.dropout = 0.0f;
  cfg.text_drop = 0.0f;
  tf::Transformer model(cfg, 9);
  nn::Rng rng(10);
  std::vector<tf::TokenItem> items;
  for (int i = 0; i < 8; ++i) {
    tf::TokenItem it;
    for (int j = 0; j < 10; ++j) {
      it.ids.push_back(static_cast<int>(rng.below(32)));
      it.lower.push_back(static_cast<int>(rng.below(32)));
    }
    it.words = {2 + i};
    items.push_back(it);
  }
  tf::MaskedTrainConfig mc;
  mc.steps = 5000;
  mc.batch = 8;
  mc.lr = 2e-3f;
  mc.weight_decay = 0.0f;
  mc.eval_every = 250;
  int reached = -1;
  tf::train_masked(model, items, items, mc, 11, [&](const tf::MaskedEval& e) {
    if (reached < 0 && e.val_acc > 0.99) reached = e.step;
  });
  MESSAGE("dual-stream overfit reached >99% at step " << reached);
  CHECK(reached > 0);
  // The head predicts upper-stream ids only.
  const auto text = model.embed({{2}});
  tf::Canvas c{1, 11, tf::layout_tokens(items[0].ids, 11, cfg), tf::layout_tokens(items[0].lower, 11, cfg, true)};
  nn::NoGradGuard ng;
  CHECK(model.forward(text, c).shape() == nn::Shape{1, 11, cfg.K + 3});
}

TEST_CASE("train_upper end to end") {
  data::SynthConfig sc;
  const data::Dataset ds = data::synth_dataset(40, 3, sc);
  vq::VqTrainConfig vt;
  vt.steps = 20;
  vt.epoch_steps = 10;
  tf::MaskedTrainConfig mt;
  mt.steps = 10;
  mt.batch = 4;
  mt.eval_every = 10;
  edit::UpperTraining log;
  const auto ed = edit::train_upper(ds, toy_vq(16), vt, toy_tf(), mt, 4, &log);
  CHECK(ed.upper.config().in_dims == 6);
  CHECK(ed.lower.config().in_dims == 10);
  CHECK(ed.upper.config().d_lookup == 4);
  CHECK(ed.model.config().K_lower == 32);
  CHECK(log.curve.size() == 1);
  const auto dir = std::filesystem::temp_directory_path() / "mmm_test_upper";
  ed.save(dir);
  const auto back = edit::UpperEditor::load(dir);
  CHECK(nn::hash_values(back.model.params()) == nn::hash_values(ed.model.params()));
  std::filesystem::remove(dir / "upper_tf.ckpt");
  CHECK_THROWS_AS(edit::UpperEditor::load(dir), Error);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(edit::train_upper(ds, toy_vq(12), vt, toy_tf(), mt, 4), Error);
}
