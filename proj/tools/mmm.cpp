// mmm: command-line front end for data synthesis, training, generation,
// editing, evaluation, benchmarking and rendering.
//
// Exit codes: 0 success, 1 usage error (bad flags, bad config), 2 runtime
// error.

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "mmm/cli/pipeline.hpp"
#include "mmm/cli/render.hpp"
#include "mmm/error.hpp"
#include "mmm/motiondata/io.hpp"
#include "mmm/numerics/tensor.hpp"

using namespace mmm;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

// Flags that override one RunConfig field when given on the command line.
class Overrides {
 public:
  template <class T, class Fn>
  CLI::Option* add(CLI::App* app, const std::string& flags, T init, const std::string& desc, Fn apply) {
    auto v = std::make_shared<T>(init);
    CLI::Option* o = app->add_option(flags, *v, desc)->capture_default_str();
    items_.push_back({o, [v, apply](cli::RunConfig& c) { apply(c, *v); }});
    return o;
  }

  void apply(cli::RunConfig& c) const {
    for (const auto& [opt, fn] : items_) {
      if (opt->count() > 0) fn(c);
    }
  }

 private:
  std::vector<std::pair<CLI::Option*, std::function<void(cli::RunConfig&)>>> items_;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Run config JSON (sections data, tokenizer, transformer, schedule, "
                                        "sampling, editing, eval); flags override it");
  app->add_option("--seed", c.seed, "Seed for all randomness (fallback: $MMM_SEED, then 0)");
  app->add_option("--set", c.sets, "Override a config field, e.g. --set transformer.train.steps=500 (repeatable)");
}

std::uint64_t resolve_seed(const Common& c) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("MMM_SEED")) {
    std::uint64_t v = 0;
    const std::string s = env;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
      throw UsageError("MMM_SEED must be a non-negative integer, got '" + s + "'");
    }
    return v;
  }
  return 0;
}

cli::RunConfig resolve_config(const Common& c, const Overrides& o) {
  try {
    cli::RunConfig cfg = c.config.empty() ? cli::RunConfig::defaults() : cli::RunConfig::load(c.config);
    for (const auto& s : c.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects path=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    o.apply(cfg);
    cfg.validate();
    return cfg;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

json meta(const cli::RunConfig& cfg, std::uint64_t seed) {
  return {{"config_hash", cfg.hash()}, {"seed", seed}, {"config", cfg.to_json()}};
}

std::vector<std::string> provenance(const cli::RunConfig& cfg, std::uint64_t seed) {
  return {"config_hash=" + cfg.hash(), "seed=" + std::to_string(seed), "config=" + cfg.to_json().dump()};
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(v[i]);
  }
  return s;
}

void log(const std::string& line) { std::cerr << line << std::endl; }

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Sampling and schedule flags shared by the decoding subcommands.
void add_decode_flags(CLI::App* app, Overrides& o) {
  const cli::RunConfig d = cli::RunConfig::defaults();
  o.add(app, "--schedule", gen::to_string(d.schedule.kind), "Mask schedule: cosine, linear, square_root",
        [](cli::RunConfig& c, const std::string& v) { c.schedule.kind = gen::schedule_kind_from_string(v); });
  o.add(app, "--T", d.schedule.T, "Iteration budget at the maximum length",
        [](cli::RunConfig& c, int v) { c.schedule.T = v; });
  o.add(app, "--sampling", gen::to_string(d.sampling.kind), "Sampling: temperature, top_k, top_p",
        [](cli::RunConfig& c, const std::string& v) { c.sampling.kind = gen::sampling_kind_from_string(v); });
  o.add(app, "--beta", d.sampling.beta, "Sampling temperature",
        [](cli::RunConfig& c, double v) { c.sampling.beta = v; });
  o.add(app, "--k-frac", d.sampling.k_frac, "Top-k kept fraction of the codebook",
        [](cli::RunConfig& c, double v) { c.sampling.k_frac = v; });
  o.add(app, "--p", d.sampling.p, "Top-p probability mass",
        [](cli::RunConfig& c, double v) { c.sampling.p = v; });
  o.add(app, "--gumbel", d.sampling.gumbel, "Add annealed Gumbel noise to the confidences",
        [](cli::RunConfig& c, bool v) { c.sampling.gumbel = v; });
}

void write_motion(const std::string& path, const data::Motion& m, std::vector<std::string> comments) {
  data::save_motion(path, m, comments);
  log("wrote " + path);
}

}  // namespace

int main(int argc, char** argv) {
  nn::retain_heap_memory();
  const cli::RunConfig defaults = cli::RunConfig::defaults();

  CLI::App app{"Masked motion model: synthetic corpus, tokenizer and transformer training, generation, editing, "
               "evaluation"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  Common common;
  std::vector<std::function<void()>> runners;

  // gen-data
  auto* gd = app.add_subcommand("gen-data", "Synthesize the motion-text corpus into a directory");
  Overrides gd_o;
  std::string gd_out;
  add_common(gd, common);
  gd->add_option("-o,--out", gd_out, "Output directory")->required();
  gd_o.add(gd, "--items", defaults.data.items, "Number of items",
           [](cli::RunConfig& c, int v) { c.data.items = v; });
  gd->callback([&] {
    runners.push_back([&] {
      const auto cfg = resolve_config(common, gd_o);
      const auto seed = resolve_seed(common);
      const auto ds = data::synth_dataset(cfg.data.items, seed, cfg.data.synth);
      data::save_dataset(ds, gd_out, provenance(cfg, seed));
      log("wrote " + std::to_string(ds.items.size()) + " items to " + gd_out);
    });
  });

  // train-vq
  auto* tv = app.add_subcommand("train-vq", "Train the motion tokenizer");
  Overrides tv_o;
  std::string tv_data, tv_out, tv_curve;
  add_common(tv, common);
  tv->add_option("--data", tv_data, "Dataset directory from gen-data")->required();
  tv->add_option("-o,--out", tv_out, "Output tokenizer checkpoint")->required();
  tv->add_option("--curve", tv_curve, "Optional CSV of per-epoch metrics");
  tv_o.add(tv, "--steps", defaults.tokenizer.train.steps, "Training steps",
           [](cli::RunConfig& c, int v) { c.tokenizer.train.steps = v; });
  tv_o.add(tv, "--K", defaults.tokenizer.model.K, "Codebook size (also sets transformer.K)",
           [](cli::RunConfig& c, int v) { c.tokenizer.model.K = c.transformer.model.K = v; });
  tv_o.add(tv, "--reset-every", defaults.tokenizer.model.reset_every, "Codebook reset period in steps (0 = never)",
           [](cli::RunConfig& c, int v) { c.tokenizer.model.reset_every = v; });
  tv->callback([&] {
    runners.push_back([&] {
      const auto cfg = resolve_config(common, tv_o);
      const auto seed = resolve_seed(common);
      const auto ds = data::load_dataset(tv_data);
      std::vector<vq::VqEpochMetrics> curve;
      const auto tok = cli::train_vq(ds, cfg, seed, &curve);
      tok.save(tv_out, meta(cfg, seed));
      log("wrote " + tv_out);
      const auto& last = curve.back();
      log("recon_mse " + fixed(last.recon_mse) + " utilization " + fixed(last.utilization, 3) + " perplexity " +
          fixed(last.perplexity, 1));
      if (!tv_curve.empty()) {
        std::string csv;
        for (const auto& c : provenance(cfg, seed)) csv += "# " + c + "\n";
        csv += "epoch,step,recon_mse,l_vq,perplexity,utilization,resets\n";
        for (const auto& e : curve) {
          csv += std::to_string(e.epoch) + "," + std::to_string(e.step) + "," + fixed(e.recon_mse) + "," +
                 fixed(e.l_vq) + "," + fixed(e.perplexity, 3) + "," + fixed(e.utilization, 4) + "," +
                 std::to_string(e.resets) + "\n";
        }
        data::write_file(tv_curve, csv);
      }
    });
  });

  // train-mmm
  auto* tm = app.add_subcommand("train-mmm", "Train the masked motion transformer on tokenized data");
  Overrides tm_o;
  std::string tm_data, tm_vq, tm_out, tm_curve;
  add_common(tm, common);
  tm->add_option("--data", tm_data, "Dataset directory from gen-data")->required();
  tm->add_option("--ckpt-vq", tm_vq, "Tokenizer checkpoint")->required();
  tm->add_option("-o,--out", tm_out, "Output transformer checkpoint")->required();
  tm->add_option("--curve", tm_curve, "Optional CSV of validation reports");
  tm_o.add(tm, "--steps", defaults.transformer.train.steps, "Training steps",
           [](cli::RunConfig& c, int v) { c.transformer.train.steps = v; });
  tm_o.add(tm, "--batch", defaults.transformer.train.batch, "Batch size",
           [](cli::RunConfig& c, int v) { c.transformer.train.batch = v; });
  tm_o.add(tm, "--layers", defaults.transformer.model.layers, "Transformer layers",
           [](cli::RunConfig& c, int v) { c.transformer.model.layers = v; });
  tm_o.add(tm, "--d-model", defaults.transformer.model.d_model, "Transformer width",
           [](cli::RunConfig& c, int v) { c.transformer.model.d_model = v; });
  tm->callback([&] {
    runners.push_back([&] {
      auto cfg = resolve_config(common, tm_o);
      const auto seed = resolve_seed(common);
      const auto ds = data::load_dataset(tm_data);
      const auto tok = vq::Tokenizer::load(tm_vq);
      std::vector<tf::MaskedEval> curve;
      const auto model = cli::train_mmm(ds, tok, cfg, seed, &curve);
      model.save(tm_out, meta(cfg, seed));
      log("wrote " + tm_out);
      if (!curve.empty()) {
        log("val_acc " + fixed(curve.back().val_acc, 4) + " val_loss " + fixed(curve.back().val_loss, 4));
      }
      if (!tm_curve.empty()) {
        std::string csv;
        for (const auto& c : provenance(cfg, seed)) csv += "# " + c + "\n";
        csv += "step,train_loss,val_loss,val_acc,val_length_mae\n";
        for (const auto& e : curve) {
          csv += std::to_string(e.step) + "," + fixed(e.train_loss) + "," + fixed(e.val_loss) + "," +
                 fixed(e.val_acc) + "," + fixed(e.val_length_mae) + "\n";
        }
        data::write_file(tm_curve, csv);
      }
    });
  });

  // train-upper
  auto* tu = app.add_subcommand("train-upper", "Train the body-part tokenizers and the upper-body editing model");
  Overrides tu_o;
  std::string tu_data, tu_out;
  add_common(tu, common);
  tu->add_option("--data", tu_data, "Dataset directory from gen-data")->required();
  tu->add_option("-o,--out", tu_out, "Output directory")->required();
  tu_o.add(tu, "--vq-steps", defaults.tokenizer.train.steps, "Tokenizer training steps (each half)",
           [](cli::RunConfig& c, int v) { c.tokenizer.train.steps = v; });
  tu_o.add(tu, "--steps", defaults.transformer.train.steps, "Transformer training steps",
           [](cli::RunConfig& c, int v) { c.transformer.train.steps = v; });
  tu->callback([&] {
    runners.push_back([&] {
      const auto cfg = resolve_config(common, tu_o);
      const auto seed = resolve_seed(common);
      const auto ds = data::load_dataset(tu_data);
      const auto ed = edit::train_upper(ds, cfg.tokenizer.model, cfg.tokenizer.train, cfg.transformer.model,
                                        cfg.transformer.train, seed);
      ed.save(tu_out, meta(cfg, seed));
      log("wrote " + tu_out);
    });
  });

  // generate
  auto* ge = app.add_subcommand("generate", "Text to motion");
  Overrides ge_o;
  std::string ge_prompt, ge_vq, ge_tf, ge_out;
  int ge_length = 0;
  add_common(ge, common);
  add_decode_flags(ge, ge_o);
  ge->add_option("--prompt", ge_prompt, "Text prompt (empty: unconditional)");
  ge->add_option("--ckpt-vq", ge_vq, "Tokenizer checkpoint")->required();
  ge->add_option("--ckpt-tf", ge_tf, "Transformer checkpoint")->required();
  ge->add_option("--length", ge_length, "Motion tokens to generate (0: predicted)")->capture_default_str();
  ge->add_option("-o,--out", ge_out, "Output .mmot file")->required();
  ge->callback([&] {
    runners.push_back([&] {
      const auto cfg = resolve_config(common, ge_o);
      const auto seed = resolve_seed(common);
      if (ge_length < 0) throw UsageError("--length must be >= 0");
      const auto tok = vq::Tokenizer::load(ge_vq);
      const auto model = tf::Transformer::load(ge_tf);
      const auto g = gen::text_to_motion(tok, model, ge_prompt, ge_length > 0 ? std::optional<int>(ge_length) : std::nullopt,
                                         cfg.schedule, cfg.sampling, seed);
      auto comments = provenance(cfg, seed);
      comments.push_back("prompt=" + ge_prompt);
      comments.push_back("tokens=" + join_ints(g.ids));
      comments.push_back("iterations=" + std::to_string(g.iterations));
      write_motion(ge_out, g.motion, comments);
    });
  });

  // edit
  auto* ed = app.add_subcommand("edit", "Temporal editing (in-betweening, ranges or a layout file) or upper-body editing");
  Overrides ed_o;
  std::string ed_vq, ed_tf, ed_input, ed_layout, ed_upper, ed_prompt, ed_out;
  std::vector<std::string> ed_ranges;
  bool ed_inbetween = false;
  add_common(ed, common);
  add_decode_flags(ed, ed_o);
  ed->add_option("--ckpt-vq", ed_vq, "Tokenizer checkpoint (temporal modes)");
  ed->add_option("--ckpt-tf", ed_tf, "Transformer checkpoint (temporal modes)");
  ed->add_option("--input", ed_input, "Input .mmot motion");
  ed->add_option("--layout", ed_layout, "Layout JSON {length, conditions: [{pos, token}]}");
  ed->add_option("--range", ed_ranges, "Frame range begin:end to regenerate (repeatable)");
  ed->add_flag("--inbetween", ed_inbetween, "Regenerate all but the head/tail fractions (editing.inbetween_*)");
  ed->add_option("--upper", ed_upper, "Upper-body editor directory from train-upper");
  ed->add_option("--prompt", ed_prompt, "Text prompt for the regenerated part");
  ed->add_option("-o,--out", ed_out, "Output .mmot file")->required();
  ed_o.add(ed, "--head", defaults.editing.inbetween_head, "Kept leading fraction for --inbetween",
           [](cli::RunConfig& c, double v) { c.editing.inbetween_head = v; });
  ed_o.add(ed, "--tail", defaults.editing.inbetween_tail, "Kept trailing fraction for --inbetween",
           [](cli::RunConfig& c, double v) { c.editing.inbetween_tail = v; });
  ed_o.add(ed, "--keep-lower", defaults.editing.body.lower_keep_fraction,
           "Fraction of lower-body tokens kept in upper-body editing",
           [](cli::RunConfig& c, double v) { c.editing.body.lower_keep_fraction = v; });
  ed->callback([&] {
    runners.push_back([&] {
      const auto cfg = resolve_config(common, ed_o);
      const auto seed = resolve_seed(common);
      const int modes = !ed_layout.empty() + !ed_ranges.empty() + ed_inbetween + !ed_upper.empty();
      if (modes != 1) throw UsageError("choose exactly one of --layout, --range, --inbetween, --upper");
      auto comments = provenance(cfg, seed);
      comments.push_back("prompt=" + ed_prompt);
      if (!ed_upper.empty()) {
        if (ed_input.empty()) throw UsageError("--upper needs --input");
        const auto editor = edit::UpperEditor::load(ed_upper);
        const auto r = edit::upper_body_edit(editor, data::load_motion(ed_input), ed_prompt, cfg.editing.body,
                                             cfg.schedule, cfg.sampling, seed);
        comments.push_back("upper_tokens=" + join_ints(r.upper_ids));
        comments.push_back("lower_canvas=" + join_ints(r.lower_canvas));
        write_motion(ed_out, r.motion, comments);
        return;
      }
      if (ed_vq.empty() || ed_tf.empty()) throw UsageError("temporal editing needs --ckpt-vq and --ckpt-tf");
      const auto tok = vq::Tokenizer::load(ed_vq);
      const auto model = tf::Transformer::load(ed_tf);
      if (!ed_layout.empty()) {
        gen::MaskLayout layout;
        try {
          layout = gen::MaskLayout::from_json(json::parse(data::read_file(ed_layout)));
        } catch (const json::exception& e) {
          throw Error(ErrorKind::format, "edit", ed_layout + ": " + e.what());
        }
        const auto r = edit::decode_layout(model, layout, ed_prompt, cfg.schedule, cfg.sampling, seed);
        comments.push_back("tokens=" + join_ints(r.ids));
        comments.push_back("conditions=" + std::to_string(layout.conditions.size()));
        write_motion(ed_out, tok.detokenize(r.ids), comments);
        return;
      }
      if (ed_input.empty()) throw UsageError("--range and --inbetween need --input");
      const auto motion = data::load_motion(ed_input);
      std::vector<edit::FrameRange> ranges;
      if (ed_inbetween) {
        ranges = edit::inbetween_ranges(motion.frames, cfg.editing.inbetween_head, cfg.editing.inbetween_tail);
      }
      for (const auto& s : ed_ranges) {
        edit::FrameRange fr;
        const auto colon = s.find(':');
        const char* p = s.data();
        const auto a = std::from_chars(p, p + (colon == std::string::npos ? 0 : colon), fr.begin);
        const auto b = colon == std::string::npos ? a : std::from_chars(p + colon + 1, p + s.size(), fr.end);
        if (colon == std::string::npos || a.ec != std::errc() || b.ec != std::errc() || b.ptr != p + s.size() ||
            a.ptr != p + colon) {
          throw UsageError("--range expects begin:end, got '" + s + "'");
        }
        ranges.push_back(fr);
      }
      const auto r = edit::edit_temporal(tok, model, motion, ranges, ed_prompt, cfg.schedule, cfg.sampling, seed);
      comments.push_back("tokens=" + join_ints(r.ids));
      comments.push_back("conditions=" + std::to_string(r.layout.conditions.size()));
      write_motion(ed_out, r.motion, comments);
    });
  });

  // longgen
  auto* lg = app.add_subcommand("longgen", "Long motion from a prompt sequence joined by generated transitions");
  Overrides lg_o;
  std::string lg_vq, lg_tf, lg_out;
  std::vector<std::string> lg_prompts;
  std::vector<int> lg_lengths;
  add_common(lg, common);
  add_decode_flags(lg, lg_o);
  lg->add_option("--ckpt-vq", lg_vq, "Tokenizer checkpoint")->required();
  lg->add_option("--ckpt-tf", lg_tf, "Transformer checkpoint")->required();
  lg->add_option("--prompt", lg_prompts, "Prompt of one segment (repeatable, in order)")->required();
  lg->add_option("--lengths", lg_lengths, "Tokens per segment (default: predicted)")->delimiter(',');
  lg->add_option("-o,--out", lg_out, "Output .mmot file")->required();
  lg_o.add(lg, "--transition-tokens", defaults.editing.long_sequence.transition_tokens, "Tokens per transition",
           [](cli::RunConfig& c, int v) { c.editing.long_sequence.transition_tokens = v; });
  lg->callback([&] {
    runners.push_back([&] {
      const auto cfg = resolve_config(common, lg_o);
      const auto seed = resolve_seed(common);
      const auto tok = vq::Tokenizer::load(lg_vq);
      const auto model = tf::Transformer::load(lg_tf);
      const auto ls = edit::long_sequence(tok, model, lg_prompts, lg_lengths, cfg.editing.long_sequence,
                                          cfg.schedule, cfg.sampling, seed);
      auto comments = provenance(cfg, seed);
      for (const auto& p : lg_prompts) comments.push_back("prompt=" + p);
      comments.push_back("segment_starts=" + join_ints(ls.segment_starts));
      comments.push_back("segment_lengths=" + join_ints(ls.segment_lengths));
      comments.push_back("transition_iterations=" + join_ints(ls.transition_iterations));
      comments.push_back("tokens=" + join_ints(ls.ids));
      write_motion(lg_out, ls.motion, comments);
    });
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Score a trained model on the test split");
  Overrides ev_o;
  std::string ev_data, ev_vq, ev_tf, ev_out = "eval_report.json";
  std::string ev_fx = eval::shipped_extractor_path().string();
  add_common(ev, common);
  add_decode_flags(ev, ev_o);
  ev->add_option("--data", ev_data, "Dataset directory from gen-data")->required();
  ev->add_option("--ckpt-vq", ev_vq, "Tokenizer checkpoint")->required();
  ev->add_option("--ckpt-tf", ev_tf, "Transformer checkpoint")->required();
  ev->add_option("--extractor", ev_fx, "Frozen feature extractor checkpoint")->capture_default_str();
  ev->add_option("-o,--out", ev_out, "Output report")->capture_default_str();
  ev_o.add(ev, "--n-samples", defaults.eval.n_samples, "Test prompts to generate",
           [](cli::RunConfig& c, int v) { c.eval.n_samples = v; });
  ev->callback([&] {
    runners.push_back([&] {
      const auto cfg = resolve_config(common, ev_o);
      const auto seed = resolve_seed(common);
      const auto ds = data::load_dataset(ev_data);
      const auto tok = vq::Tokenizer::load(ev_vq);
      const auto model = tf::Transformer::load(ev_tf);
      const auto fx = eval::FeatureExtractor::load(ev_fx);
      const auto report = cli::evaluate_model(ds, tok, model, fx, cfg, seed);
      data::write_file(ev_out, report.to_json().dump(2) + "\n");
      log("wrote " + ev_out);
    });
  });

  // bench
  auto* be = app.add_subcommand("bench", "Decode time per motion length (CSV of L, seconds)");
  Overrides be_o;
  std::string be_tf, be_out;
  add_common(be, common);
  add_decode_flags(be, be_o);
  be->add_option("--ckpt-tf", be_tf, "Transformer checkpoint (default: freshly initialized from the config)");
  be->add_option("-o,--out", be_out, "Output CSV (default: stdout)");
  be_o.add(be, "--lengths", defaults.eval.bench_lengths, "Token lengths",
           [](cli::RunConfig& c, const std::vector<int>& v) { c.eval.bench_lengths = v; })
      ->delimiter(',');
  be_o.add(be, "--repeats", defaults.eval.bench_repeats, "Timed decodes per length",
           [](cli::RunConfig& c, int v) { c.eval.bench_repeats = v; });
  be->callback([&] {
    runners.push_back([&] {
      const auto cfg = resolve_config(common, be_o);
      const auto seed = resolve_seed(common);
      const auto model = be_tf.empty() ? tf::Transformer(cfg.transformer.model, nn::Rng::derive(seed, 0))
                                       : tf::Transformer::load(be_tf);
      const auto rows = eval::aits_bench(model, cfg.eval.bench_lengths, cfg.eval.bench_repeats, cfg.schedule,
                                         cfg.sampling, seed);
      std::string csv;
      for (const auto& c : provenance(cfg, seed)) csv += "# " + c + "\n";
      csv += "L,seconds\n";
      for (const auto& r : rows) csv += std::to_string(r.L) + "," + fixed(r.mean_seconds) + "\n";
      if (be_out.empty()) {
        std::cout << csv;
      } else {
        data::write_file(be_out, csv);
        log("wrote " + be_out);
      }
    });
  });

  // render
  auto* re = app.add_subcommand("render", "Root-trajectory SVG and per-dim CSV of a motion file");
  Overrides re_o;
  std::string re_input, re_out;
  add_common(re, common);
  re->add_option("input", re_input, "Input .mmot motion")->required();
  re->add_option("-o,--out", re_out, "Output prefix (writes <prefix>.svg and <prefix>.csv)")->required();
  re->callback([&] {
    runners.push_back([&] {
      const auto cfg = resolve_config(common, re_o);
      const auto seed = resolve_seed(common);
      const auto m = data::load_motion(re_input);
      std::vector<std::string> comments = {"config_hash=" + cfg.hash(), "seed=" + std::to_string(seed)};
      data::write_file(re_out + ".svg", cli::trajectory_svg(m, comments));
      data::write_file(re_out + ".csv", cli::motion_csv(m, comments));
      log("wrote " + re_out + ".svg and " + re_out + ".csv");
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    for (auto& run : runners) run();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
