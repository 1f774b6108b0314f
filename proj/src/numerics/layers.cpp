#include "mmm/numerics/layers.hpp"

#include <cmath>

namespace mmm::nn {

Linear Linear::make(ParamSet& ps, const std::string& name, int in, int out, Rng& rng, bool bias, float stddev) {
  Linear l;
  l.w = ps.add(name + ".w", stddev > 0.0f ? init_normal({in, out}, stddev, rng)
                                          : init_uniform({in, out}, 1.0f / std::sqrt(static_cast<float>(in)), rng));
  if (bias) {
    l.b = ps.add(name + ".b", Tensor::zeros({out}, true));
  }
  return l;
}

LayerNorm LayerNorm::make(ParamSet& ps, const std::string& name, int dim) {
  LayerNorm n;
  n.g = ps.add(name + ".g", Tensor::full({dim}, 1.0f, true));
  n.b = ps.add(name + ".b", Tensor::zeros({dim}, true));
  return n;
}

Conv1d Conv1d::make(ParamSet& ps, const std::string& name, int kernel, int in, int out, int stride, int pad_left,
                    int pad_right, Rng& rng) {
  Conv1d c;
  c.w = ps.add(name + ".w", init_uniform({kernel, in, out}, 1.0f / std::sqrt(static_cast<float>(kernel * in)), rng));
  c.b = ps.add(name + ".b", Tensor::zeros({out}, true));
  c.stride = stride;
  c.pad_left = pad_left;
  c.pad_right = pad_right;
  return c;
}

ConvTranspose1d ConvTranspose1d::make(ParamSet& ps, const std::string& name, int kernel, int in, int out, int stride,
                                      int pad, Rng& rng) {
  ConvTranspose1d c;
  // Each output frame receives kernel/stride taps.
  const float fan_in = static_cast<float>(in * kernel / stride);
  c.w = ps.add(name + ".w", init_uniform({kernel, in, out}, 1.0f / std::sqrt(fan_in), rng));
  c.b = ps.add(name + ".b", Tensor::zeros({out}, true));
  c.stride = stride;
  c.pad = pad;
  return c;
}

}  // namespace mmm::nn
