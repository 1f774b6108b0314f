#pragma once

#include <vector>

#include "mmm/numerics/params.hpp"

namespace mmm::nn {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.99f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;  // decoupled (AdamW)
  float clip_norm = 1.0f;     // global L2 norm; <= 0 disables
};

/// Adam over the requires_grad tensors of a ParamSet. Moment buffers are
/// allocated once; the set must not change after construction.
class Adam {
 public:
  Adam(const ParamSet& params, AdamConfig cfg);

  /// Applies one update from the accumulated gradients and returns the
  /// global gradient norm before clipping.
  float step();
  void set_lr(float lr) noexcept { cfg_.lr = lr; }
  float lr() const noexcept { return cfg_.lr; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  AdamConfig cfg_;
  long long t_ = 0;
};

}  // namespace mmm::nn
