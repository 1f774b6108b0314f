#pragma once

#include <string>

#include "mmm/numerics/ops.hpp"
#include "mmm/numerics/params.hpp"

namespace mmm::nn {

/// Thin parameter holders; each registers its tensors in a ParamSet under
/// `<name>.w` / `<name>.b` etc.
struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out], undefined without bias

  /// Uniform(+-1/sqrt(in)) weights unless `stddev` > 0; zero bias.
  static Linear make(ParamSet& ps, const std::string& name, int in, int out, Rng& rng, bool bias = true,
                     float stddev = 0.0f);
  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
};

struct LayerNorm {
  Tensor g;
  Tensor b;

  static LayerNorm make(ParamSet& ps, const std::string& name, int dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, g, b); }
};

struct Conv1d {
  Tensor w;  // [kernel, in, out]
  Tensor b;
  int stride = 1;
  int pad_left = 0;
  int pad_right = 0;

  static Conv1d make(ParamSet& ps, const std::string& name, int kernel, int in, int out, int stride, int pad_left,
                     int pad_right, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv1d(x, w, b, stride, pad_left, pad_right); }
};

struct ConvTranspose1d {
  Tensor w;  // [kernel, in, out]
  Tensor b;
  int stride = 2;
  int pad = 1;

  static ConvTranspose1d make(ParamSet& ps, const std::string& name, int kernel, int in, int out, int stride, int pad,
                              Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv_transpose1d(x, w, b, stride, pad); }
};

}  // namespace mmm::nn
