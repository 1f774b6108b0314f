#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

// Inner loops shared by the ops. Written so GCC vectorizes them without
// -ffast-math: axpy has no reduction, dot splits its reduction over 8 lanes.
namespace mmm::nn::kernels {

inline void axpy(int n, float a, const float* __restrict x, float* __restrict y) noexcept {
  for (int i = 0; i < n; ++i) {
    y[i] += a * x[i];
  }
}

inline float dot(int n, const float* x, const float* y) noexcept {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) {
      acc[j] += x[i + j] * y[i + j];
    }
  }
  float s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) {
    s += x[i] * y[i];
  }
  return s;
}

/// out[c*rows + r] = in[r*cols + c]
inline void transpose(int rows, int cols, const float* in, float* out) noexcept {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      out[static_cast<std::size_t>(c) * rows + r] = in[static_cast<std::size_t>(r) * cols + c];
    }
  }
}

/// Numerically stable softmax of one row. A row that is entirely -inf
/// yields all zeros.
inline void softmax_row(int n, const float* x, float* y) noexcept {
  float mx = -std::numeric_limits<float>::infinity();
  for (int i = 0; i < n; ++i) {
    mx = x[i] > mx ? x[i] : mx;
  }
  if (mx == -std::numeric_limits<float>::infinity()) {
    for (int i = 0; i < n; ++i) {
      y[i] = 0.0f;
    }
    return;
  }
  float total = 0.0f;
  for (int i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    total += y[i];
  }
  const float inv = 1.0f / total;
  for (int i = 0; i < n; ++i) {
    y[i] *= inv;
  }
}

inline float log_sum_exp(int n, const float* x) noexcept {
  float mx = -std::numeric_limits<float>::infinity();
  for (int i = 0; i < n; ++i) {
    mx = x[i] > mx ? x[i] : mx;
  }
  float total = 0.0f;
  for (int i = 0; i < n; ++i) {
    total += std::exp(x[i] - mx);
  }
  return mx + std::log(total);
}

}  // namespace mmm::nn::kernels
