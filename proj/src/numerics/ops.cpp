#include "mmm/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Core>

#include "mmm/error.hpp"
#include "mmm/numerics/grad_check.hpp"
#include "mmm/numerics/kernels.hpp"

namespace mmm::nn {

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw Error(ErrorKind::shape, op, detail);
}

void require_defined(const char* op, const Tensor& t, const char* name) {
  if (!t.defined()) {
    shape_error(op, std::string("input '") + name + "' is undefined");
  }
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) {
    return false;
  }
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Shared implementation of add/sub/mul with suffix broadcasting of `b`.
enum class Binary { add, sub, mul };

Tensor binary(const char* op, Binary kind, const Tensor& a, const Tensor& b) {
  require_defined(op, a, "a");
  require_defined(op, b, "b");
  if (!is_suffix(b.shape(), a.shape())) {
    shape_error(op, "cannot combine " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
  }
  const std::size_t n = a.numel();
  const std::size_t nb = b.numel();
  Tensor out = detail::make_result(op, a.shape(), {&a, &b});
  const float* av = a.values().data();
  const float* bv = b.values().data();
  float* ov = out.mutable_values().data();
  for (std::size_t base = 0; base < n; base += nb) {
    const float* x = av + base;
    float* o = ov + base;
    switch (kind) {
      case Binary::add:
        for (std::size_t j = 0; j < nb; ++j) o[j] = x[j] + bv[j];
        break;
      case Binary::sub:
        for (std::size_t j = 0; j < nb; ++j) o[j] = x[j] - bv[j];
        break;
      case Binary::mul:
        for (std::size_t j = 0; j < nb; ++j) o[j] = x[j] * bv[j];
        break;
    }
  }
  if (out.requires_grad()) {
    Node* an = a.node();
    Node* bn = b.node();
    out.node()->backward = [an, bn, n, nb, kind](Node& self) {
      const float* g = self.grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        float* da = an->grad.data();
        if (kind == Binary::mul) {
          const float* y = bn->value.data();
          for (std::size_t base = 0; base < n; base += nb) {
            for (std::size_t j = 0; j < nb; ++j) da[base + j] += g[base + j] * y[j];
          }
        } else {
          kernels::axpy(static_cast<int>(n), 1.0f, g, da);
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        float* db = bn->grad.data();
        const float* x = an->value.data();
        for (std::size_t base = 0; base < n; base += nb) {
          const float* gi = g + base;
          switch (kind) {
            case Binary::add:
              for (std::size_t j = 0; j < nb; ++j) db[j] += gi[j];
              break;
            case Binary::sub:
              for (std::size_t j = 0; j < nb; ++j) db[j] -= gi[j];
              break;
            case Binary::mul:
              for (std::size_t j = 0; j < nb; ++j) db[j] += gi[j] * x[base + j];
              break;
          }
        }
      }
    };
  }
  return out;
}

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

// C[rows,m] += A[rows,k] * B[k,m]
void gemm_acc(int rows, int k, int m, const float* A, const float* B, float* C) {
  MMap(C, rows, m).noalias() += CMap(A, rows, k) * CMap(B, k, m);
}

// Gradients of C = A*B given dC: dA += dC * B^T, dB += A^T * dC.
void gemm_backward(int rows, int k, int m, const float* A, const float* B, const float* dC, float* dA, float* dB) {
  const CMap g(dC, rows, m);
  if (dA != nullptr) {
    MMap(dA, rows, k).noalias() += g * CMap(B, k, m).transpose();
  }
  if (dB != nullptr) {
    MMap(dB, k, m).noalias() += CMap(A, rows, k).transpose() * g;
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined("matmul", a, "a");
  require_defined("matmul", b, "b");
  if (b.rank() != 2) {
    shape_error("matmul", "right operand must be 2-D, got " + shape_str(b.shape()));
  }
  const int k = b.dim(0);
  const int m = b.dim(1);
  if (a.dim(-1) != k) {
    shape_error("matmul", "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const int rows = static_cast<int>(a.numel() / static_cast<std::size_t>(k));
  Shape shape = a.shape();
  shape.back() = m;
  Tensor out = detail::make_result("matmul", std::move(shape), {&a, &b});
  gemm_acc(rows, k, m, a.values().data(), b.values().data(), out.mutable_values().data());
  if (out.requires_grad()) {
    Node* an = a.node();
    Node* bn = b.node();
    out.node()->backward = [an, bn, rows, k, m](Node& self) {
      float* da = nullptr;
      float* db = nullptr;
      if (an->requires_grad) {
        an->ensure_grad();
        da = an->grad.data();
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        db = bn->grad.data();
      }
      gemm_backward(rows, k, m, an->value.data(), bn->value.data(), self.grad.data(), da, db);
    };
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_defined("linear", x, "x");
  require_defined("linear", w, "w");
  if (w.rank() != 2 || x.dim(-1) != w.dim(0)) {
    shape_error("linear", "cannot apply weight " + shape_str(w.shape()) + " to input " + shape_str(x.shape()));
  }
  const int k = w.dim(0);
  const int m = w.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != m)) {
    shape_error("linear", "bias " + shape_str(bias.shape()) + " does not match output width " + std::to_string(m));
  }
  const int rows = static_cast<int>(x.numel() / static_cast<std::size_t>(k));
  Shape shape = x.shape();
  shape.back() = m;
  Tensor out = detail::make_result("linear", std::move(shape), {&x, &w, &bias});
  float* ov = out.mutable_values().data();
  if (bias.defined()) {
    for (int i = 0; i < rows; ++i) {
      std::copy_n(bias.values().data(), m, ov + static_cast<std::size_t>(i) * m);
    }
  }
  gemm_acc(rows, k, m, x.values().data(), w.values().data(), ov);
  if (out.requires_grad()) {
    Node* xn = x.node();
    Node* wn = w.node();
    Node* bn = bias.defined() ? bias.node() : nullptr;
    out.node()->backward = [xn, wn, bn, rows, k, m](Node& self) {
      float* dx = nullptr;
      float* dw = nullptr;
      if (xn->requires_grad) {
        xn->ensure_grad();
        dx = xn->grad.data();
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        dw = wn->grad.data();
      }
      gemm_backward(rows, k, m, xn->value.data(), wn->value.data(), self.grad.data(), dx, dw);
      if (bn != nullptr && bn->requires_grad) {
        bn->ensure_grad();
        for (int i = 0; i < rows; ++i) {
          kernels::axpy(m, 1.0f, self.grad.data() + static_cast<std::size_t>(i) * m, bn->grad.data());
        }
      }
    };
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", Binary::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", Binary::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", Binary::mul, a, b); }

Tensor scale(const Tensor& a, float s) {
  require_defined("scale", a, "a");
  Tensor out = detail::make_result("scale", a.shape(), {&a});
  const float* av = a.values().data();
  float* ov = out.mutable_values().data();
  for (std::size_t i = 0; i < a.numel(); ++i) {
    ov[i] = av[i] * s;
  }
  if (out.requires_grad()) {
    Node* an = a.node();
    out.node()->backward = [an, s](Node& self) {
      an->ensure_grad();
      kernels::axpy(static_cast<int>(self.grad.size()), s, self.grad.data(), an->grad.data());
    };
  }
  return out;
}

Tensor relu(const Tensor& x) {
  require_defined("relu", x, "x");
  Tensor out = detail::make_result("relu", x.shape(), {&x});
  const float* xv = x.values().data();
  float* ov = out.mutable_values().data();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    ov[i] = xv[i] > 0.0f ? xv[i] : 0.0f;
  }
  if (out.requires_grad()) {
    Node* xn = x.node();
    out.node()->backward = [xn](Node& self) {
      xn->ensure_grad();
      const float* xv = xn->value.data();
      const float* g = self.grad.data();
      float* dx = xn->grad.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        dx[i] += xv[i] > 0.0f ? g[i] : 0.0f;
      }
    };
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  require_defined("gelu", x, "x");
  constexpr float c = 0.7978845608028654f;  // sqrt(2/pi)
  constexpr float a3 = 0.044715f;
  Tensor out = detail::make_result("gelu", x.shape(), {&x});
  const float* xv = x.values().data();
  float* ov = out.mutable_values().data();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const float v = xv[i];
    ov[i] = 0.5f * v * (1.0f + std::tanh(c * (v + a3 * v * v * v)));
  }
  if (out.requires_grad()) {
    Node* xn = x.node();
    out.node()->backward = [xn](Node& self) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const float v = xn->value[i];
        const float t = std::tanh(c * (v + a3 * v * v * v));
        const float d = 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * c * (1.0f + 3.0f * a3 * v * v);
        xn->grad[i] += self.grad[i] * d;
      }
    };
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  require_defined("layer_norm", x, "x");
  const int n = x.dim(-1);
  if (gamma.numel() != static_cast<std::size_t>(n) || beta.numel() != static_cast<std::size_t>(n)) {
    shape_error("layer_norm", "gamma/beta " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                                  " do not match feature width " + std::to_string(n));
  }
  const std::size_t rows = x.numel() / static_cast<std::size_t>(n);
  Tensor out = detail::make_result("layer_norm", x.shape(), {&x, &gamma, &beta});
  std::vector<float> xhat(x.numel());
  std::vector<float> rstd(rows);
  const float* xv = x.values().data();
  const float* gv = gamma.values().data();
  const float* bv = beta.values().data();
  float* ov = out.mutable_values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = xv + r * n;
    float mu = 0.0f;
    for (int j = 0; j < n; ++j) {
      mu += row[j];
    }
    mu /= static_cast<float>(n);
    float var = 0.0f;
    for (int j = 0; j < n; ++j) {
      const float d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<float>(n);
    const float rs = 1.0f / std::sqrt(var + eps);
    rstd[r] = rs;
    for (int j = 0; j < n; ++j) {
      const float h = (row[j] - mu) * rs;
      xhat[r * n + j] = h;
      ov[r * n + j] = h * gv[j] + bv[j];
    }
  }
  if (out.requires_grad()) {
    Node* xn = x.node();
    Node* gn = gamma.node();
    Node* bn = beta.node();
    out.node()->backward = [xn, gn, bn, n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
      const float* g = self.grad.data();
      if (gn->requires_grad) {
        gn->ensure_grad();
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
      }
      std::vector<float> dh(n);
      for (std::size_t r = 0; r < rows; ++r) {
        const float* gr = g + r * n;
        const float* hr = xhat.data() + r * n;
        if (gn->requires_grad) {
          for (int j = 0; j < n; ++j) {
            gn->grad[j] += gr[j] * hr[j];
          }
        }
        if (bn->requires_grad) {
          for (int j = 0; j < n; ++j) {
            bn->grad[j] += gr[j];
          }
        }
        if (xn->requires_grad) {
          float mean_dh = 0.0f;
          float mean_dhh = 0.0f;
          for (int j = 0; j < n; ++j) {
            dh[j] = gr[j] * gn->value[j];
            mean_dh += dh[j];
            mean_dhh += dh[j] * hr[j];
          }
          mean_dh /= static_cast<float>(n);
          mean_dhh /= static_cast<float>(n);
          float* dx = xn->grad.data() + r * n;
          for (int j = 0; j < n; ++j) {
            dx[j] += rstd[r] * (dh[j] - mean_dh - hr[j] * mean_dhh);
          }
        }
      }
    };
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  require_defined("softmax", x, "x");
  const int n = x.dim(-1);
  const std::size_t rows = x.numel() / static_cast<std::size_t>(n);
  Tensor out = detail::make_result("softmax", x.shape(), {&x});
  const float* xv = x.values().data();
  float* ov = out.mutable_values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::softmax_row(n, xv + r * n, ov + r * n);
  }
  if (out.requires_grad()) {
    Node* xn = x.node();
    out.node()->backward = [xn, n, rows](Node& self) {
      xn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const float* y = self.value.data() + r * n;
        const float* g = self.grad.data() + r * n;
        const float s = kernels::dot(n, y, g);
        float* dx = xn->grad.data() + r * n;
        for (int j = 0; j < n; ++j) {
          dx[j] += y[j] * (g[j] - s);
        }
      }
    };
  }
  return out;
}

Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& ids_shape) {
  require_defined("embedding", table, "table");
  if (table.rank() != 2) {
    shape_error("embedding", "table must be 2-D, got " + shape_str(table.shape()));
  }
  if (shape_numel(ids_shape) != ids.size()) {
    shape_error("embedding", "ids shape " + shape_str(ids_shape) + " does not hold " + std::to_string(ids.size()) + " ids");
  }
  const int vocab = table.dim(0);
  const int d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw Error(ErrorKind::value, "embedding", "id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab));
    }
  }
  Shape shape = ids_shape;
  shape.push_back(d);
  Tensor out = detail::make_result("embedding", std::move(shape), {&table});
  float* ov = out.mutable_values().data();
  const float* tv = table.values().data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(tv + static_cast<std::size_t>(ids[i]) * d, d, ov + i * d);
  }
  if (out.requires_grad()) {
    Node* tn = table.node();
    out.node()->backward = [tn, d, idv = std::vector<int>(ids.begin(), ids.end())](Node& self) {
      tn->ensure_grad();
      for (std::size_t i = 0; i < idv.size(); ++i) {
        kernels::axpy(d, 1.0f, self.grad.data() + i * d, tn->grad.data() + static_cast<std::size_t>(idv[i]) * d);
      }
    };
  }
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad_left, int pad_right) {
  require_defined("conv1d", x, "x");
  require_defined("conv1d", w, "w");
  if (x.rank() != 3 || w.rank() != 3 || x.dim(2) != w.dim(1)) {
    shape_error("conv1d", "input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  }
  if (stride < 1 || pad_left < 0 || pad_right < 0) {
    shape_error("conv1d", "invalid stride/padding");
  }
  const int B = x.dim(0);
  const int T = x.dim(1);
  const int cin = x.dim(2);
  const int ks = w.dim(0);
  const int cout = w.dim(2);
  const int span = T + pad_left + pad_right - ks;
  if (span < 0) {
    shape_error("conv1d", "sequence of length " + std::to_string(T) + " shorter than kernel " + std::to_string(ks));
  }
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(cout)) {
    shape_error("conv1d", "bias " + shape_str(bias.shape()) + " does not match " + std::to_string(cout) + " channels");
  }
  const int tout = span / stride + 1;
  Tensor out = detail::make_result("conv1d", {B, tout, cout}, {&x, &w, &bias});
  const float* xv = x.values().data();
  const float* wv = w.values().data();
  float* ov = out.mutable_values().data();
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < tout; ++t) {
      float* o = ov + (static_cast<std::size_t>(b) * tout + t) * cout;
      if (bias.defined()) {
        std::copy_n(bias.values().data(), cout, o);
      }
      for (int tap = 0; tap < ks; ++tap) {
        const int tin = t * stride + tap - pad_left;
        if (tin < 0 || tin >= T) {
          continue;
        }
        const float* xr = xv + (static_cast<std::size_t>(b) * T + tin) * cin;
        const float* wt = wv + static_cast<std::size_t>(tap) * cin * cout;
        for (int c = 0; c < cin; ++c) {
          kernels::axpy(cout, xr[c], wt + static_cast<std::size_t>(c) * cout, o);
        }
      }
    }
  }
  if (out.requires_grad()) {
    Node* xn = x.node();
    Node* wn = w.node();
    Node* bn = bias.defined() ? bias.node() : nullptr;
    out.node()->backward = [=](Node& self) {
      const float* g = self.grad.data();
      if (xn->requires_grad) {
        xn->ensure_grad();
        std::vector<float> wt(wn->value.size());
        for (int tap = 0; tap < ks; ++tap) {
          kernels::transpose(cin, cout, wn->value.data() + static_cast<std::size_t>(tap) * cin * cout,
                             wt.data() + static_cast<std::size_t>(tap) * cin * cout);
        }
        for (int b = 0; b < B; ++b) {
          for (int t = 0; t < tout; ++t) {
            const float* gr = g + (static_cast<std::size_t>(b) * tout + t) * cout;
            for (int tap = 0; tap < ks; ++tap) {
              const int tin = t * stride + tap - pad_left;
              if (tin < 0 || tin >= T) {
                continue;
              }
              float* dx = xn->grad.data() + (static_cast<std::size_t>(b) * T + tin) * cin;
              const float* wtt = wt.data() + static_cast<std::size_t>(tap) * cin * cout;
              for (int co = 0; co < cout; ++co) {
                if (gr[co] != 0.0f) {
                  kernels::axpy(cin, gr[co], wtt + static_cast<std::size_t>(co) * cin, dx);
                }
              }
            }
          }
        }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        for (int b = 0; b < B; ++b) {
          for (int t = 0; t < tout; ++t) {
            const float* gr = g + (static_cast<std::size_t>(b) * tout + t) * cout;
            for (int tap = 0; tap < ks; ++tap) {
              const int tin = t * stride + tap - pad_left;
              if (tin < 0 || tin >= T) {
                continue;
              }
              const float* xr = xn->value.data() + (static_cast<std::size_t>(b) * T + tin) * cin;
              float* dw = wn->grad.data() + static_cast<std::size_t>(tap) * cin * cout;
              for (int c = 0; c < cin; ++c) {
                if (xr[c] != 0.0f) {
                  kernels::axpy(cout, xr[c], gr, dw + static_cast<std::size_t>(c) * cout);
                }
              }
            }
          }
        }
      }
      if (bn != nullptr && bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t r = 0; r < static_cast<std::size_t>(B) * tout; ++r) {
          kernels::axpy(cout, 1.0f, g + r * cout, bn->grad.data());
        }
      }
    };
  }
  return out;
}

Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  require_defined("conv_transpose1d", x, "x");
  require_defined("conv_transpose1d", w, "w");
  if (x.rank() != 3 || w.rank() != 3 || x.dim(2) != w.dim(1)) {
    shape_error("conv_transpose1d", "input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  }
  const int B = x.dim(0);
  const int T = x.dim(1);
  const int cin = x.dim(2);
  const int ks = w.dim(0);
  const int cout = w.dim(2);
  const int tout = (T - 1) * stride - 2 * pad + ks;
  if (stride < 1 || pad < 0 || tout < 1) {
    shape_error("conv_transpose1d", "invalid stride/padding for length " + std::to_string(T));
  }
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(cout)) {
    shape_error("conv_transpose1d", "bias does not match " + std::to_string(cout) + " channels");
  }
  Tensor out = detail::make_result("conv_transpose1d", {B, tout, cout}, {&x, &w, &bias});
  const float* xv = x.values().data();
  const float* wv = w.values().data();
  float* ov = out.mutable_values().data();
  if (bias.defined()) {
    for (std::size_t r = 0; r < static_cast<std::size_t>(B) * tout; ++r) {
      std::copy_n(bias.values().data(), cout, ov + r * cout);
    }
  }
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      const float* xr = xv + (static_cast<std::size_t>(b) * T + t) * cin;
      for (int tap = 0; tap < ks; ++tap) {
        const int to = t * stride + tap - pad;
        if (to < 0 || to >= tout) {
          continue;
        }
        float* o = ov + (static_cast<std::size_t>(b) * tout + to) * cout;
        const float* wt = wv + static_cast<std::size_t>(tap) * cin * cout;
        for (int c = 0; c < cin; ++c) {
          kernels::axpy(cout, xr[c], wt + static_cast<std::size_t>(c) * cout, o);
        }
      }
    }
  }
  if (out.requires_grad()) {
    Node* xn = x.node();
    Node* wn = w.node();
    Node* bn = bias.defined() ? bias.node() : nullptr;
    out.node()->backward = [=](Node& self) {
      const float* g = self.grad.data();
      if (xn->requires_grad) {
        xn->ensure_grad();
        std::vector<float> wt(wn->value.size());
        for (int tap = 0; tap < ks; ++tap) {
          kernels::transpose(cin, cout, wn->value.data() + static_cast<std::size_t>(tap) * cin * cout,
                             wt.data() + static_cast<std::size_t>(tap) * cin * cout);
        }
        for (int b = 0; b < B; ++b) {
          for (int t = 0; t < T; ++t) {
            float* dx = xn->grad.data() + (static_cast<std::size_t>(b) * T + t) * cin;
            for (int tap = 0; tap < ks; ++tap) {
              const int to = t * stride + tap - pad;
              if (to < 0 || to >= tout) {
                continue;
              }
              const float* gr = g + (static_cast<std::size_t>(b) * tout + to) * cout;
              const float* wtt = wt.data() + static_cast<std::size_t>(tap) * cin * cout;
              for (int co = 0; co < cout; ++co) {
                if (gr[co] != 0.0f) {
                  kernels::axpy(cin, gr[co], wtt + static_cast<std::size_t>(co) * cin, dx);
                }
              }
            }
          }
        }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        for (int b = 0; b < B; ++b) {
          for (int t = 0; t < T; ++t) {
            const float* xr = xn->value.data() + (static_cast<std::size_t>(b) * T + t) * cin;
            for (int tap = 0; tap < ks; ++tap) {
              const int to = t * stride + tap - pad;
              if (to < 0 || to >= tout) {
                continue;
              }
              const float* gr = g + (static_cast<std::size_t>(b) * tout + to) * cout;
              float* dw = wn->grad.data() + static_cast<std::size_t>(tap) * cin * cout;
              for (int c = 0; c < cin; ++c) {
                if (xr[c] != 0.0f) {
                  kernels::axpy(cout, xr[c], gr, dw + static_cast<std::size_t>(c) * cout);
                }
              }
            }
          }
        }
      }
      if (bn != nullptr && bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t r = 0; r < static_cast<std::size_t>(B) * tout; ++r) {
          kernels::axpy(cout, 1.0f, g + r * cout, bn->grad.data());
        }
      }
    };
  }
  return out;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads, std::span<const float> additive_mask) {
  require_defined("attention", q, "q");
  require_defined("attention", k, "k");
  require_defined("attention", v, "v");
  if (q.rank() != 3 || k.rank() != 3 || v.shape() != k.shape() || q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2)) {
    shape_error("attention", "q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                                 shape_str(v.shape()) + " do not conform");
  }
  const int B = q.dim(0);
  const int Sq = q.dim(1);
  const int Sk = k.dim(1);
  const int D = q.dim(2);
  if (heads < 1 || D % heads != 0) {
    shape_error("attention", "model width " + std::to_string(D) + " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t per_key = static_cast<std::size_t>(B) * Sk;
  const std::size_t per_pair = static_cast<std::size_t>(B) * Sq * Sk;
  if (!additive_mask.empty() && additive_mask.size() != per_key && additive_mask.size() != per_pair) {
    shape_error("attention", "mask of " + std::to_string(additive_mask.size()) + " entries fits neither [B,Sk] nor [B,Sq,Sk]");
  }
  const int hd = D / heads;
  const float scl = 1.0f / std::sqrt(static_cast<float>(hd));
  Tensor out = detail::make_result("attention", {B, Sq, D}, {&q, &k, &v});
  const bool keep = out.requires_grad();
  const std::size_t block = static_cast<std::size_t>(Sq) * Sk;
  std::vector<float> probs(keep ? static_cast<std::size_t>(B) * heads * block : block);
  std::vector<float> mask(additive_mask.empty() ? 0 : block);
  // Per (batch, head) the strided head slices are views; Eigen handles the stride.
  using Strided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
  using StridedOut = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
  RowMat scores(Sq, Sk);
  for (int b = 0; b < B; ++b) {
    if (!additive_mask.empty()) {
      for (int i = 0; i < Sq; ++i) {
        for (int j = 0; j < Sk; ++j) {
          mask[static_cast<std::size_t>(i) * Sk + j] = additive_mask.size() == per_key
                                                           ? additive_mask[static_cast<std::size_t>(b) * Sk + j]
                                                           : additive_mask[(static_cast<std::size_t>(b) * Sq + i) * Sk + j];
        }
      }
    }
    for (int h = 0; h < heads; ++h) {
      const Strided qh(q.values().data() + static_cast<std::size_t>(b) * Sq * D + h * hd, Sq, hd, Eigen::OuterStride<>(D));
      const Strided kh(k.values().data() + static_cast<std::size_t>(b) * Sk * D + h * hd, Sk, hd, Eigen::OuterStride<>(D));
      const Strided vh(v.values().data() + static_cast<std::size_t>(b) * Sk * D + h * hd, Sk, hd, Eigen::OuterStride<>(D));
      scores.noalias() = (qh * kh.transpose()) * scl;
      float* p = keep ? probs.data() + (static_cast<std::size_t>(b) * heads + h) * block : probs.data();
      for (int i = 0; i < Sq; ++i) {
        float* row = scores.data() + static_cast<std::size_t>(i) * Sk;
        if (!mask.empty()) {
          const float* mr = mask.data() + static_cast<std::size_t>(i) * Sk;
          for (int j = 0; j < Sk; ++j) {
            row[j] += mr[j];
          }
        }
        kernels::softmax_row(Sk, row, p + static_cast<std::size_t>(i) * Sk);
      }
      StridedOut oh(out.mutable_values().data() + static_cast<std::size_t>(b) * Sq * D + h * hd, Sq, hd,
                    Eigen::OuterStride<>(D));
      oh.noalias() = CMap(p, Sq, Sk) * vh;
    }
  }
  if (keep) {
    Node* qn = q.node();
    Node* kn = k.node();
    Node* vn = v.node();
    out.node()->backward = [=, probs = std::move(probs)](Node& self) {
      using GradMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
      for (Node* n : {qn, kn, vn}) {
        if (n->requires_grad) {
          n->ensure_grad();
        }
      }
      RowMat dp(Sq, Sk);
      for (int b = 0; b < B; ++b) {
        for (int h = 0; h < heads; ++h) {
          const std::size_t qo = static_cast<std::size_t>(b) * Sq * D + h * hd;
          const std::size_t ko = static_cast<std::size_t>(b) * Sk * D + h * hd;
          const CMap p(probs.data() + (static_cast<std::size_t>(b) * heads + h) * block, Sq, Sk);
          const Strided go(self.grad.data() + qo, Sq, hd, Eigen::OuterStride<>(D));
          if (vn->requires_grad) {
            GradMap(vn->grad.data() + ko, Sk, hd, Eigen::OuterStride<>(D)).noalias() += p.transpose() * go;
          }
          if (!qn->requires_grad && !kn->requires_grad) {
            continue;
          }
          const Strided vh(vn->value.data() + ko, Sk, hd, Eigen::OuterStride<>(D));
          dp.noalias() = go * vh.transpose();
          // Softmax backward: ds = p * (dp - sum(p * dp)), then the 1/sqrt(hd) scale.
          for (int i = 0; i < Sq; ++i) {
            const float* pr = p.data() + static_cast<std::size_t>(i) * Sk;
            float* dr = dp.data() + static_cast<std::size_t>(i) * Sk;
            const float s = kernels::dot(Sk, pr, dr);
            for (int j = 0; j < Sk; ++j) {
              dr[j] = pr[j] * (dr[j] - s) * scl;
            }
          }
          if (qn->requires_grad) {
            const Strided kh(kn->value.data() + ko, Sk, hd, Eigen::OuterStride<>(D));
            GradMap(qn->grad.data() + qo, Sq, hd, Eigen::OuterStride<>(D)).noalias() += dp * kh;
          }
          if (kn->requires_grad) {
            const Strided qh(qn->value.data() + qo, Sq, hd, Eigen::OuterStride<>(D));
            GradMap(kn->grad.data() + ko, Sk, hd, Eigen::OuterStride<>(D)).noalias() += dp.transpose() * qh;
          }
        }
      }
    };
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_defined("cross_entropy", logits, "logits");
  const int V = logits.dim(-1);
  const std::size_t rows = logits.numel() / static_cast<std::size_t>(V);
  if (targets.size() != rows) {
    shape_error("cross_entropy", std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " rows of " +
                                     shape_str(logits.shape()));
  }
  std::size_t valid = 0;
  for (int t : targets) {
    if (t >= V || t < -1) {
      throw Error(ErrorKind::value, "cross_entropy", "target " + std::to_string(t) + " outside [0," + std::to_string(V) + ")");
    }
    valid += t >= 0 ? 1 : 0;
  }
  Tensor out = detail::make_result("cross_entropy", {1}, {&logits});
  if (valid == 0) {
    return out;
  }
  const float* lv = logits.values().data();
  float total = 0.0f;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0) {
      continue;
    }
    const float* row = lv + r * V;
    total += kernels::log_sum_exp(V, row) - row[targets[r]];
  }
  out.mutable_values()[0] = total / static_cast<float>(valid);
  if (out.requires_grad()) {
    Node* ln = logits.node();
    out.node()->backward = [ln, V, rows, valid, tv = std::vector<int>(targets.begin(), targets.end())](Node& self) {
      ln->ensure_grad();
      const float g = self.grad[0] / static_cast<float>(valid);
      std::vector<float> p(V);
      for (std::size_t r = 0; r < rows; ++r) {
        if (tv[r] < 0) {
          continue;
        }
        kernels::softmax_row(V, ln->value.data() + r * V, p.data());
        float* dl = ln->grad.data() + r * V;
        for (int j = 0; j < V; ++j) {
          dl[j] += g * p[j];
        }
        dl[tv[r]] -= g;
      }
    };
  }
  return out;
}

Tensor stop_gradient(const Tensor& x) {
  require_defined("stop_gradient", x, "x");
  Tensor out = detail::make_result("stop_gradient", x.shape(), std::initializer_list<const Tensor*>{});
  std::copy(x.values().begin(), x.values().end(), out.mutable_values().begin());
  return detail::sg_tape_pass(out);
}

Tensor sum(const Tensor& x) {
  require_defined("sum", x, "x");
  Tensor out = detail::make_result("sum", {1}, {&x});
  float s = 0.0f;
  for (float v : x.values()) {
    s += v;
  }
  out.mutable_values()[0] = s;
  if (out.requires_grad()) {
    Node* xn = x.node();
    out.node()->backward = [xn](Node& self) {
      xn->ensure_grad();
      for (float& g : xn->grad) {
        g += self.grad[0];
      }
    };
  }
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0f / static_cast<float>(x.numel())); }

Tensor mse(const Tensor& a, const Tensor& b) {
  require_defined("mse", a, "a");
  require_defined("mse", b, "b");
  if (a.shape() != b.shape()) {
    shape_error("mse", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t n = a.numel();
  Tensor out = detail::make_result("mse", {1}, {&a, &b});
  float s = 0.0f;
  for (std::size_t i = 0; i < n; ++i) {
    const float d = a.at(i) - b.at(i);
    s += d * d;
  }
  out.mutable_values()[0] = s / static_cast<float>(n);
  if (out.requires_grad()) {
    Node* an = a.node();
    Node* bn = b.node();
    out.node()->backward = [an, bn, n](Node& self) {
      const float g = 2.0f * self.grad[0] / static_cast<float>(n);
      if (an->requires_grad) {
        an->ensure_grad();
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
      }
      for (std::size_t i = 0; i < n; ++i) {
        const float d = g * (an->value[i] - bn->value[i]);
        if (an->requires_grad) {
          an->grad[i] += d;
        }
        if (bn->requires_grad) {
          bn->grad[i] -= d;
        }
      }
    };
  }
  return out;
}

Tensor narrow(const Tensor& x, int axis, int start, int length) {
  require_defined("narrow", x, "x");
  const int r = x.rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    shape_error("narrow", "axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  }
  const int extent = x.shape()[a];
  if (start < 0 || length < 1 || start + length > extent) {
    shape_error("narrow", "range [" + std::to_string(start) + "," + std::to_string(start + length) +
                              ") outside axis of size " + std::to_string(extent));
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (int i = 0; i < a; ++i) {
    outer *= static_cast<std::size_t>(x.shape()[i]);
  }
  for (int i = a + 1; i < r; ++i) {
    inner *= static_cast<std::size_t>(x.shape()[i]);
  }
  Shape shape = x.shape();
  shape[a] = length;
  Tensor out = detail::make_result("narrow", std::move(shape), {&x});
  const std::size_t chunk = static_cast<std::size_t>(length) * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    const float* src = x.values().data() + (o * extent + start) * inner;
    std::copy_n(src, chunk, out.mutable_values().data() + o * chunk);
  }
  if (out.requires_grad()) {
    Node* xn = x.node();
    out.node()->backward = [xn, outer, inner, chunk, extent, start](Node& self) {
      xn->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        kernels::axpy(static_cast<int>(chunk), 1.0f, self.grad.data() + o * chunk,
                      xn->grad.data() + (o * extent + start) * inner);
      }
    };
  }
  return out;
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  require_defined("concat_last", a, "a");
  require_defined("concat_last", b, "b");
  Shape sa = a.shape();
  Shape sb = b.shape();
  const int da = sa.back();
  const int db = sb.back();
  sa.pop_back();
  sb.pop_back();
  if (sa != sb) {
    shape_error("concat_last", "leading dims differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t rows = shape_numel(sa);
  sa.push_back(da + db);
  Tensor out = detail::make_result("concat_last", std::move(sa), {&a, &b});
  float* ov = out.mutable_values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.values().data() + r * da, da, ov + r * (da + db));
    std::copy_n(b.values().data() + r * db, db, ov + r * (da + db) + da);
  }
  if (out.requires_grad()) {
    Node* an = a.node();
    Node* bn = b.node();
    out.node()->backward = [an, bn, rows, da, db](Node& self) {
      for (std::size_t r = 0; r < rows; ++r) {
        const float* g = self.grad.data() + r * (da + db);
        if (an->requires_grad) {
          an->ensure_grad();
          kernels::axpy(da, 1.0f, g, an->grad.data() + r * da);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          kernels::axpy(db, 1.0f, g + da, bn->grad.data() + r * db);
        }
      }
    };
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined("reshape", x, "x");
  if (shape_numel(shape) != x.numel()) {
    shape_error("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out = detail::make_result("reshape", std::move(shape), {&x});
  std::copy(x.values().begin(), x.values().end(), out.mutable_values().begin());
  if (out.requires_grad()) {
    Node* xn = x.node();
    out.node()->backward = [xn](Node& self) {
      xn->ensure_grad();
      kernels::axpy(static_cast<int>(self.grad.size()), 1.0f, self.grad.data(), xn->grad.data());
    };
  }
  return out;
}

Tensor time_mean(const Tensor& x) {
  require_defined("time_mean", x, "x");
  if (x.rank() != 3) {
    shape_error("time_mean", "expected [B,T,C], got " + shape_str(x.shape()));
  }
  const int B = x.dim(0);
  const int T = x.dim(1);
  const int C = x.dim(2);
  Tensor out = detail::make_result("time_mean", {B, C}, {&x});
  const float inv = 1.0f / static_cast<float>(T);
  for (int b = 0; b < B; ++b) {
    float* o = out.mutable_values().data() + static_cast<std::size_t>(b) * C;
    for (int t = 0; t < T; ++t) {
      kernels::axpy(C, inv, x.values().data() + (static_cast<std::size_t>(b) * T + t) * C, o);
    }
  }
  if (out.requires_grad()) {
    Node* xn = x.node();
    out.node()->backward = [xn, B, T, C, inv](Node& self) {
      xn->ensure_grad();
      for (int b = 0; b < B; ++b) {
        for (int t = 0; t < T; ++t) {
          kernels::axpy(C, inv, self.grad.data() + static_cast<std::size_t>(b) * C,
                        xn->grad.data() + (static_cast<std::size_t>(b) * T + t) * C);
        }
      }
    };
  }
  return out;
}

Tensor dropout(const Tensor& x, float p, Rng& rng) {
  require_defined("dropout", x, "x");
  if (p < 0.0f || p >= 1.0f) {
    throw Error(ErrorKind::value, "dropout", "probability must lie in [0,1)");
  }
  if (p == 0.0f) {
    return x;
  }
  const float keep_scale = 1.0f / (1.0f - p);
  std::vector<float> keep(x.numel());
  for (float& k : keep) {
    k = rng.uniform() < p ? 0.0f : keep_scale;
  }
  Tensor out = detail::make_result("dropout", x.shape(), {&x});
  const float* xv = x.values().data();
  float* ov = out.mutable_values().data();
  for (std::size_t i = 0; i < keep.size(); ++i) {
    ov[i] = xv[i] * keep[i];
  }
  if (out.requires_grad()) {
    Node* xn = x.node();
    out.node()->backward = [xn, keep = std::move(keep)](Node& self) {
      xn->ensure_grad();
      const float* g = self.grad.data();
      float* dx = xn->grad.data();
      for (std::size_t i = 0; i < keep.size(); ++i) {
        dx[i] += g[i] * keep[i];
      }
    };
  }
  return out;
}

}  // namespace mmm::nn
