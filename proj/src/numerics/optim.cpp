#include "mmm/numerics/optim.hpp"

#include <cmath>

#include "mmm/error.hpp"

namespace mmm::nn {

Adam::Adam(const ParamSet& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& [name, t] : params.items()) {
    if (t.requires_grad()) {
      params_.push_back(t);
      m_.emplace_back(t.numel(), 0.0f);
      v_.emplace_back(t.numel(), 0.0f);
    }
  }
}

float Adam::step() {
  double sq = 0.0;
  for (const Tensor& p : params_) {
    if (!p.has_grad()) {
      continue;
    }
    for (float g : p.node()->grad) {
      sq += static_cast<double>(g) * g;
    }
  }
  const float norm = static_cast<float>(std::sqrt(sq));
  if (!std::isfinite(norm)) {
    throw Error(ErrorKind::diverged, "adam", "gradient norm is not finite");
  }
  const float clip = cfg_.clip_norm > 0.0f && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0f;
  ++t_;
  const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
  const float step = cfg_.lr / bc1;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    if (!p.has_grad()) {
      continue;
    }
    float* w = p.mutable_values().data();
    const float* g = p.node()->grad.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    const std::size_t n = p.numel();
    for (std::size_t i = 0; i < n; ++i) {
      const float gi = g[i] * clip;
      m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * gi * gi;
      w[i] -= step * m[i] / (std::sqrt(v[i] / bc2) + cfg_.eps) + cfg_.lr * cfg_.weight_decay * w[i];
    }
  }
  return norm;
}

}  // namespace mmm::nn
