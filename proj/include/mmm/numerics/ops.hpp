#pragma once

#include <span>
#include <vector>

#include "mmm/numerics/rng.hpp"
#include "mmm/numerics/tensor.hpp"

// Differentiable operations. Layout conventions:
//   sequences are [batch, time, channels] (channels last);
//   matmul multiplies the last axis of `a` with a 2-D `b`.
// Every op raises mmm::Error(ErrorKind::shape) naming itself and the
// offending dimensions when inputs do not conform.
namespace mmm::nn {

Tensor matmul(const Tensor& a, const Tensor& b);
/// x @ w + bias, bias broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Elementwise; `b` may also broadcast when its shape is a suffix of `a`'s.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);

Tensor relu(const Tensor& x);
/// tanh approximation.
Tensor gelu(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);
Tensor softmax(const Tensor& x);

/// Rows of `table` ([vocab, dim]) selected by ids; output shape ids_shape + [dim].
Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& ids_shape);

/// x [B,T,Cin], w [kernel,Cin,Cout], bias [Cout] (may be undefined).
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad_left, int pad_right);
/// Transposed convolution; output length (T-1)*stride - 2*pad + kernel.
Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);

/// Multi-head scaled dot-product attention. q [B,Sq,D], k/v [B,Sk,D].
/// `additive_mask` is empty, [B*Sk] (per key) or [B*Sq*Sk]; -inf removes a key.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                 std::span<const float> additive_mask = {});

/// Mean negative log-likelihood of `targets` under softmax(logits).
/// logits [..., V]; one target per row, -1 marks an ignored row.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

/// Identity forward, zero gradient (the sg(.) operator).
Tensor stop_gradient(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// mean((a - b)^2) over all elements.
Tensor mse(const Tensor& a, const Tensor& b);

Tensor narrow(const Tensor& x, int axis, int start, int length);
Tensor concat_last(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& x, Shape shape);
/// Mean over axis 1 of a rank-3 tensor: [B,T,C] -> [B,C].
Tensor time_mean(const Tensor& x);
/// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, float p, Rng& rng);

}  // namespace mmm::nn
