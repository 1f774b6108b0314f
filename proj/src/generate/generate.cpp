#include "mmm/generate/generate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "mmm/error.hpp"

namespace mmm::gen {

void ScheduleConfig::validate() const {
  if (T < 1) throw Error(ErrorKind::value, "schedule_config", "T must be >= 1");
  if (M < 1) throw Error(ErrorKind::value, "schedule_config", "M must be >= 1");
}

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::square_root: return "square_root";
  }
  return "?";
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "cosine") return ScheduleKind::cosine;
  if (s == "linear") return ScheduleKind::linear;
  if (s == "square_root") return ScheduleKind::square_root;
  throw Error(ErrorKind::value, "schedule_config", "unknown schedule kind '" + s + "'");
}

nlohmann::json ScheduleConfig::to_json() const { return {{"kind", to_string(kind)}, {"T", T}, {"M", M}}; }

ScheduleConfig ScheduleConfig::from_json(const nlohmann::json& j) {
  ScheduleConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "kind") c.kind = schedule_kind_from_string(v.get<std::string>());
    else if (key == "T") c.T = v.get<int>();
    else if (key == "M") c.M = v.get<int>();
    else throw Error(ErrorKind::value, "config", "unknown key 'schedule." + key + "'");
  }
  c.validate();
  return c;
}

int t_dyn(int L, const ScheduleConfig& cfg) {
  cfg.validate();
  if (L < 1 || L > cfg.M) {
    throw Error(ErrorKind::value, "n_masks", "L=" + std::to_string(L) + " outside [1, " + std::to_string(cfg.M) + "]");
  }
  // round(T*L/M) in integers, halves up.
  return std::max(1, (2 * cfg.T * L + cfg.M) / (2 * cfg.M));
}

int n_masks(int t, int L, const ScheduleConfig& cfg) {
  const int td = t_dyn(L, cfg);
  if (t < 0 || t > td) {
    throw Error(ErrorKind::value, "n_masks", "t=" + std::to_string(t) + " outside [0, " + std::to_string(td) + "]");
  }
  const long long r = td - t;
  switch (cfg.kind) {
    case ScheduleKind::linear:
      // ceil(L * (td - t) / td)
      return static_cast<int>((L * r + td - 1) / td);
    case ScheduleKind::square_root: {
      // ceil(L * (td^2 - t^2) / td^2)
      const long long den = static_cast<long long>(td) * td;
      const long long num = L * (den - static_cast<long long>(t) * t);
      return static_cast<int>((num + den - 1) / den);
    }
    case ScheduleKind::cosine: {
      const double x = L * std::cos(0.5 * std::numbers::pi * t / td);
      const double nearest = std::round(x);
      const double c = std::abs(x - nearest) < 1e-9 ? nearest : std::ceil(x);
      return static_cast<int>(std::clamp(c, 0.0, static_cast<double>(L)));
    }
  }
  return 0;
}

void SamplingConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::value, "sampling_config", what); };
  if (!(beta > 0.0) || !std::isfinite(beta)) bad("beta must be positive");
  if (!(k_frac > 0.0 && k_frac <= 1.0)) bad("k_frac must lie in (0,1]");
  if (!(p > 0.0 && p <= 1.0)) bad("p must lie in (0,1]");
}

std::string to_string(SamplingKind k) {
  switch (k) {
    case SamplingKind::temperature: return "temperature";
    case SamplingKind::top_k: return "top_k";
    case SamplingKind::top_p: return "top_p";
  }
  return "?";
}

SamplingKind sampling_kind_from_string(const std::string& s) {
  if (s == "temperature") return SamplingKind::temperature;
  if (s == "top_k") return SamplingKind::top_k;
  if (s == "top_p") return SamplingKind::top_p;
  throw Error(ErrorKind::value, "sampling_config", "unknown sampling kind '" + s + "'");
}

nlohmann::json SamplingConfig::to_json() const {
  return {{"kind", to_string(kind)}, {"beta", beta}, {"k_frac", k_frac}, {"p", p}, {"gumbel", gumbel}};
}

SamplingConfig SamplingConfig::from_json(const nlohmann::json& j) {
  SamplingConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "kind") c.kind = sampling_kind_from_string(v.get<std::string>());
    else if (key == "beta") c.beta = v.get<double>();
    else if (key == "k_frac") c.k_frac = v.get<double>();
    else if (key == "p") c.p = v.get<double>();
    else if (key == "gumbel") c.gumbel = v.get<bool>();
    else throw Error(ErrorKind::value, "config", "unknown key 'sampling." + key + "'");
  }
  c.validate();
  return c;
}

std::vector<double> sampling_distribution(std::span<const float> code_logits, const SamplingConfig& cfg) {
  cfg.validate();
  const int K = static_cast<int>(code_logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (float v : code_logits) {
    if (std::isnan(v)) {
      throw Error(ErrorKind::value, "sample_token", "NaN logit");
    }
    mx = std::max(mx, static_cast<double>(v));
  }
  if (K == 0 || !std::isfinite(mx)) {
    throw Error(ErrorKind::value, "sample_token", "no finite logit in row");
  }
  std::vector<double> e(static_cast<std::size_t>(K));
  for (int i = 0; i < K; ++i) {
    e[i] = std::exp((code_logits[i] - mx) / cfg.beta);
  }
  std::vector<char> keep(static_cast<std::size_t>(K), 1);
  if (cfg.kind != SamplingKind::temperature) {
    std::vector<int> order(static_cast<std::size_t>(K));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return e[a] > e[b]; });
    int n = K;
    if (cfg.kind == SamplingKind::top_k) {
      n = static_cast<int>(std::ceil(cfg.k_frac * K - 1e-9));
    } else {
      const double total = std::accumulate(e.begin(), e.end(), 0.0);
      double mass = 0.0;
      for (n = 0; n < K;) {
        mass += e[order[n]] / total;
        ++n;
        if (mass > cfg.p) {
          break;
        }
      }
    }
    n = std::clamp(n, 1, K);
    std::fill(keep.begin(), keep.end(), 0);
    for (int i = 0; i < n; ++i) {
      keep[order[i]] = 1;
    }
  }
  // Sum in index order so that a full support reproduces temperature
  // sampling bit for bit.
  double z = 0.0;
  for (int i = 0; i < K; ++i) {
    if (keep[i]) z += e[i];
  }
  for (int i = 0; i < K; ++i) {
    e[i] = keep[i] ? e[i] / z : 0.0;
  }
  return e;
}

Sample sample_token(std::span<const float> code_logits, const SamplingConfig& cfg, nn::Rng& rng) {
  const auto q = sampling_distribution(code_logits, cfg);
  const double u = rng.uniform();
  double c = 0.0;
  int last = -1;
  for (int i = 0; i < static_cast<int>(q.size()); ++i) {
    if (q[i] <= 0.0) continue;
    last = i;
    c += q[i];
    if (u < c) {
      return {i, q[i]};
    }
  }
  return {last, q[static_cast<std::size_t>(last)]};
}

nlohmann::json MaskLayout::to_json() const {
  nlohmann::json conds = nlohmann::json::array();
  for (const auto& c : conditions) {
    conds.push_back({{"pos", c.pos}, {"token", c.token}});
  }
  return {{"length", length}, {"conditions", conds}};
}

MaskLayout MaskLayout::from_json(const nlohmann::json& j) {
  try {
    MaskLayout m;
    for (const auto& [key, v] : j.items()) {
      if (key == "length") {
        m.length = v.get<int>();
      } else if (key == "conditions") {
        for (const auto& c : v) {
          for (const auto& [ck, cv] : c.items()) {
            if (ck != "pos" && ck != "token") {
              throw Error(ErrorKind::format, "layout", "unknown condition key '" + ck + "'");
            }
          }
          m.conditions.push_back({c.at("pos").get<int>(), c.at("token").get<int>()});
        }
      } else {
        throw Error(ErrorKind::format, "layout", "unknown key '" + key + "'");
      }
    }
    if (!j.contains("length")) {
      throw Error(ErrorKind::format, "layout", "missing 'length'");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, "layout", e.what());
  }
}

DecodeResult parallel_decode(const tf::Transformer& model, const tf::TextEmbedding& text, int L,
                             const ScheduleConfig& sched, const SamplingConfig& sampling, std::uint64_t seed,
                             const DecodeOptions& opts) {
  const tf::TransformerConfig& cfg = model.config();
  sched.validate();
  sampling.validate();
  if (L < 1 || L > cfg.max_tokens || L > sched.M) {
    throw Error(ErrorKind::value, "parallel_decode", "L=" + std::to_string(L) + " outside [1, " +
                                                         std::to_string(std::min(cfg.max_tokens, sched.M)) + "]");
  }
  if (text.batch != 1) {
    throw Error(ErrorKind::shape, "parallel_decode", "text embedding must hold one prompt");
  }
  const bool dual = cfg.K_lower > 0;
  if (dual != !opts.lower.empty() || (dual && static_cast<int>(opts.lower.size()) != L)) {
    throw Error(ErrorKind::shape, "parallel_decode", dual ? "dual-stream model needs L lower tokens"
                                                          : "lower tokens given to a single-stream model");
  }
  for (int t : opts.lower) {
    if (t < 0 || t > cfg.K_lower) {
      throw Error(ErrorKind::value, "parallel_decode", "lower token " + std::to_string(t) + " out of range");
    }
  }
  std::vector<int> ids(static_cast<std::size_t>(L), cfg.mask_id());
  std::vector<char> fixed(static_cast<std::size_t>(L), 0);
  for (const Condition& c : opts.conditions) {
    if (c.pos < 0 || c.pos >= L) {
      throw Error(ErrorKind::value, "parallel_decode", "condition position " + std::to_string(c.pos) +
                                                           " outside a layout of " + std::to_string(L));
    }
    if (c.token < 0 || c.token >= cfg.K) {
      throw Error(ErrorKind::value, "parallel_decode", "condition token " + std::to_string(c.token) + " is not a code");
    }
    if (fixed[c.pos]) {
      throw Error(ErrorKind::value, "parallel_decode", "duplicate condition at " + std::to_string(c.pos));
    }
    fixed[c.pos] = 1;
    ids[c.pos] = c.token;
  }
  DecodeResult res;
  const int L_free = static_cast<int>(std::count(fixed.begin(), fixed.end(), 0));
  if (L_free == 0) {
    res.ids = ids;
    return res;
  }
  const int td = t_dyn(L_free, sched);
  nn::Rng rng(seed);
  nn::Rng noise = rng.fork(1);
  const int S = L < cfg.max_tokens ? L + 1 : L;
  const int V = cfg.vocab();
  tf::Canvas canvas;
  canvas.batch = 1;
  canvas.length = S;
  if (dual) {
    canvas.lower = tf::layout_tokens(opts.lower, S, cfg, true);
  }
  nn::NoGradGuard no_grad;
  std::vector<int> free_pos;
  std::vector<double> key;
  for (int t = 0; t < td; ++t) {
    canvas.tokens = tf::layout_tokens(ids, S, cfg);
    const nn::Tensor logits = model.forward(text, canvas);
    const float* lg = logits.values().data();
    free_pos.clear();
    key.clear();
    for (int i = 0; i < L; ++i) {
      if (fixed[i]) continue;
      const Sample s = sample_token({lg + static_cast<std::size_t>(i) * V, static_cast<std::size_t>(cfg.K)}, sampling, rng);
      ids[i] = s.token;
      double k = std::log(s.confidence);
      if (sampling.gumbel) {
        const double u = std::max(noise.uniform(), 1e-300);
        k += (1.0 - static_cast<double>(t + 1) / td) * -std::log(-std::log(u));
      }
      free_pos.push_back(i);
      key.push_back(k);
    }
    const int n = n_masks(t + 1, L_free, sched);
    // Lowest confidence first; ties go to the earlier position.
    std::vector<int> order(free_pos.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key[a] < key[b]; });
    for (int j = 0; j < static_cast<int>(order.size()); ++j) {
      const int pos = free_pos[order[j]];
      if (j < n) {
        ids[pos] = cfg.mask_id();
      } else {
        fixed[pos] = 1;
      }
    }
    res.trace.push_back({t, L_free - n, n, ids});
  }
  res.iterations = td;
  res.ids = std::move(ids);
  return res;
}

Generated text_to_motion(const vq::Tokenizer& tok, const tf::Transformer& model, const std::string& prompt,
                         std::optional<int> L, const ScheduleConfig& sched, const SamplingConfig& sampling,
                         std::uint64_t seed) {
  if (tok.config().K != model.config().K) {
    throw Error(ErrorKind::value, "text_to_motion", "tokenizer and transformer disagree on K");
  }
  const tf::TextEmbedding text =
      prompt.empty() ? model.embed({tf::Transformer::null_words()}) : model.embed_text(prompt);
  const int len = L ? *L : model.predict_length(text).front();
  DecodeResult d = parallel_decode(model, text, len, sched, sampling, seed);
  Generated g;
  g.motion = tok.detokenize(d.ids);
  g.ids = std::move(d.ids);
  g.iterations = d.iterations;
  return g;
}

}  // namespace mmm::gen
