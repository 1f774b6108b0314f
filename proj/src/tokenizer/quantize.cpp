#include "mmm/tokenizer/quantize.hpp"

#include <algorithm>
#include <cmath>

#include "mmm/error.hpp"
#include "mmm/numerics/ops.hpp"

namespace mmm::vq {

namespace {

std::vector<float> unit_rows(std::span<const float> v, int d) {
  std::vector<float> out(v.begin(), v.end());
  for (std::size_t r = 0; r < out.size(); r += static_cast<std::size_t>(d)) {
    float s = 0.0f;
    for (int k = 0; k < d; ++k) {
      s += out[r + static_cast<std::size_t>(k)] * out[r + static_cast<std::size_t>(k)];
    }
    const float inv = s > 0.0f ? 1.0f / std::sqrt(s) : 0.0f;
    for (int k = 0; k < d; ++k) {
      out[r + static_cast<std::size_t>(k)] *= inv;
    }
  }
  return out;
}

}  // namespace

std::vector<int> nearest_codes(std::span<const float> z, const Tensor& entries, bool l2_normalize) {
  if (entries.rank() != 2) {
    throw Error(ErrorKind::shape, "quantize", "codebook must be [K,d], got " + nn::shape_str(entries.shape()));
  }
  const int K = entries.dim(0);
  const int d = entries.dim(1);
  if (z.empty() || z.size() % static_cast<std::size_t>(d) != 0) {
    throw Error(ErrorKind::shape, "quantize", "latents do not form rows of width " + std::to_string(d));
  }
  std::vector<float> zn, en;
  std::span<const float> zz = z;
  std::span<const float> ee = entries.values();
  if (l2_normalize) {
    zn = unit_rows(z, d);
    en = unit_rows(entries.values(), d);
    zz = zn;
    ee = en;
  }
  const std::size_t n = z.size() / static_cast<std::size_t>(d);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* zi = zz.data() + i * static_cast<std::size_t>(d);
    int best = 0;
    float best_d = INFINITY;
    for (int j = 0; j < K; ++j) {
      const float* ej = ee.data() + static_cast<std::size_t>(j) * d;
      float dist = 0.0f;
      for (int k = 0; k < d; ++k) {
        const float diff = zi[k] - ej[k];
        dist += diff * diff;
      }
      if (dist < best_d) {
        best_d = dist;
        best = j;
      }
    }
    out[i] = best;
  }
  return out;
}

double perplexity(std::span<const int> indices, int K) {
  if (indices.empty()) {
    throw Error(ErrorKind::value, "perplexity", "empty assignment list");
  }
  std::vector<std::size_t> hist(static_cast<std::size_t>(K), 0);
  for (int i : indices) {
    ++hist.at(static_cast<std::size_t>(i));
  }
  double h = 0.0;
  const double n = static_cast<double>(indices.size());
  for (std::size_t c : hist) {
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
  }
  return std::exp(h);
}

QuantizeResult quantize(const Tensor& z, const Tensor& entries, float beta, bool l2_normalize) {
  if (!z.defined() || z.numel() == 0) {
    throw Error(ErrorKind::value, "quantize", "empty input");
  }
  const int d = entries.dim(1);
  if (z.dim(-1) != d) {
    throw Error(ErrorKind::shape, "quantize", "latent width " + std::to_string(z.dim(-1)) + " != code width " + std::to_string(d));
  }
  for (float v : z.values()) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::value, "quantize", "non-finite latent");
    }
  }
  QuantizeResult r;
  r.indices = nearest_codes(z.values(), entries, l2_normalize);
  nn::Shape ids_shape(z.shape().begin(), z.shape().end() - 1);
  r.codes = nn::embedding(entries, r.indices, ids_shape);
  const float dim = static_cast<float>(d);
  r.loss = nn::add(nn::scale(nn::mse(nn::stop_gradient(z), r.codes), dim),
                   nn::scale(nn::mse(z, nn::stop_gradient(r.codes)), beta * dim));
  r.z_q = nn::add(z, nn::stop_gradient(nn::sub(r.codes, z)));
  r.perplexity = perplexity(r.indices, entries.dim(0));
  return r;
}

Codebook Codebook::make(nn::ParamSet& ps, const std::string& name, int K, int d, nn::Rng& rng) {
  if (K < 2 || d < 1) {
    throw Error(ErrorKind::value, "codebook", "need K >= 2 and d >= 1");
  }
  Codebook cb;
  cb.K = K;
  cb.d = d;
  cb.entries = ps.add(name + ".entries", nn::init_normal({K, d}, 1.0f, rng, false));
  cb.ema_count = ps.add(name + ".ema_count", Tensor::full({K}, 1.0f));
  cb.ema_sum = ps.add(name + ".ema_sum", Tensor::from({K, d}, {cb.entries.values().begin(), cb.entries.values().end()}));
  cb.uses = ps.add(name + ".uses", Tensor::zeros({K}));
  return cb;
}

Codebook::Maintenance Codebook::maintain(std::span<const int> assign, std::span<const float> z, long long iter, float decay,
                                         int reset_every, float reset_threshold, nn::Rng& rng) {
  if (z.size() != assign.size() * static_cast<std::size_t>(d)) {
    throw Error(ErrorKind::shape, "maintain_codebook", "assignments and latents disagree");
  }
  std::vector<float> n(static_cast<std::size_t>(K), 0.0f);
  std::vector<float> s(static_cast<std::size_t>(K) * d, 0.0f);
  for (std::size_t i = 0; i < assign.size(); ++i) {
    const auto j = static_cast<std::size_t>(assign[i]);
    n[j] += 1.0f;
    for (int k = 0; k < d; ++k) {
      s[j * d + k] += z[i * d + k];
    }
  }
  float* cnt = ema_count.mutable_values().data();
  float* sum = ema_sum.mutable_values().data();
  float* ent = entries.mutable_values().data();
  float* used = uses.mutable_values().data();
  for (int j = 0; j < K; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    cnt[jj] = decay * cnt[jj] + (1.0f - decay) * n[jj];
    const float denom = std::max(cnt[jj], kEmaEpsilon);
    for (int k = 0; k < d; ++k) {
      const std::size_t o = jj * d + k;
      sum[o] = decay * sum[o] + (1.0f - decay) * s[o];
      ent[o] = sum[o] / denom;
    }
    used[jj] += n[jj];
  }
  Maintenance m;
  if (reset_every > 0 && iter % reset_every == 0 && !assign.empty()) {
    for (int j = 0; j < K; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      if (used[jj] < reset_threshold) {
        const std::size_t src = rng.below(assign.size());
        for (int k = 0; k < d; ++k) {
          ent[jj * d + k] = sum[jj * d + k] = z[src * d + k];
        }
        cnt[jj] = 1.0f;
        ++m.resets;
      }
    }
    std::fill(used, used + K, 0.0f);
  }
  return m;
}

}  // namespace mmm::vq
