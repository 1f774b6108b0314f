#include "mmm/cli/pipeline.hpp"

#include <chrono>

#include "mmm/error.hpp"
#include "mmm/motiondata/classifier.hpp"

namespace mmm::cli {

std::vector<tf::TokenItem> token_items(const vq::Tokenizer& tok, const tf::Transformer& model,
                                       const data::Dataset& ds, const std::vector<int>& rows) {
  std::vector<tf::TokenItem> items;
  items.reserve(rows.size());
  for (int r : rows) {
    const data::Item& it = ds.items.at(static_cast<std::size_t>(r));
    items.push_back({tok.tokenize(it.motion), {}, model.words(it.prompt.text)});
  }
  return items;
}

vq::Tokenizer train_vq(const data::Dataset& ds, const RunConfig& cfg, std::uint64_t seed,
                       std::vector<vq::VqEpochMetrics>* curve) {
  vq::Tokenizer tok(cfg.tokenizer.model, nn::Rng::derive(seed, 0));
  auto c = vq::train_tokenizer(tok, ds, cfg.tokenizer.train, nn::Rng::derive(seed, 1));
  if (curve) *curve = std::move(c);
  return tok;
}

tf::Transformer train_mmm(const data::Dataset& ds, const vq::Tokenizer& tok, const RunConfig& cfg, std::uint64_t seed,
                          std::vector<tf::MaskedEval>* curve) {
  tf::TransformerConfig mc = cfg.transformer.model;
  mc.K = tok.config().K;
  tf::Transformer model(mc, nn::Rng::derive(seed, 0));
  const auto train = token_items(tok, model, ds, ds.train);
  const auto val = token_items(tok, model, ds, ds.val);
  auto c = tf::train_masked(model, train, val, cfg.transformer.train, nn::Rng::derive(seed, 1));
  if (curve) *curve = std::move(c);
  return model;
}

eval::EvalReport evaluate_model(const data::Dataset& ds, const vq::Tokenizer& tok, const tf::Transformer& model,
                                const eval::FeatureExtractor& fx, const RunConfig& cfg, std::uint64_t seed) {
  const EvalSection& ec = cfg.eval;
  const int n = std::min<int>(ec.n_samples, static_cast<int>(ds.test.size()));
  if (n < 2) throw Error(ErrorKind::value, "evaluate_model", "needs at least 2 test items");
  const int f = tok.config().downsample;
  const int max_tokens = model.config().max_tokens;

  std::vector<data::Motion> real, generated;
  std::vector<std::vector<int>> verbs;
  const std::uint64_t gen_seed = nn::Rng::derive(seed, 0);
  double seconds = 0.0;
  for (int i = 0; i < n; ++i) {
    const data::Item& it = ds.items[static_cast<std::size_t>(ds.test[i])];
    const int L = std::clamp((it.motion.frames + f - 1) / f, 1, max_tokens);
    const auto t0 = std::chrono::steady_clock::now();
    auto g = gen::text_to_motion(tok, model, it.prompt.text, L, cfg.schedule, cfg.sampling, nn::Rng::derive(gen_seed, i));
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    generated.push_back(std::move(g.motion));
    real.push_back(it.motion);
    verbs.push_back(it.prompt.verb_ids);
  }

  eval::EvalReport r;
  r.n_samples = n;
  r.seed = seed;
  r.config_hash = cfg.hash();
  r.extractor_hash = eval::hex_hash(fx.hash());
  const eval::Features gen_feats = fx.features(generated);
  r.fid = eval::frechet_distance(fx.features(real), gen_feats);
  nn::Rng div_rng(nn::Rng::derive(seed, 1));
  const auto div = eval::diversity(gen_feats, ec.diversity_pairs, div_rng);
  r.diversity = div.value;
  r.diversity_with_replacement = div.with_replacement;

  std::vector<std::string> prompts;
  for (int i = 0; i < std::min<int>(ec.mmodality_prompts, static_cast<int>(ds.test.size())); ++i) {
    prompts.push_back(ds.items[static_cast<std::size_t>(ds.test[i])].prompt.text);
  }
  r.mmodality = eval::mmodality(
      [&](const std::string& p, std::uint64_t s) {
        return fx.features(gen::text_to_motion(tok, model, p, std::nullopt, cfg.schedule, cfg.sampling, s).motion);
      },
      prompts, ec.mmodality_pairs, nn::Rng::derive(seed, 2));

  const auto clf = data::VerbClassifier::fit(ds, ds.train);
  r.alignment_acc = eval::alignment_accuracy(clf, generated, verbs);
  r.aits = seconds / n;
  return r;
}

}  // namespace mmm::cli
