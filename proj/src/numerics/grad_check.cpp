#include "mmm/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mmm/error.hpp"

namespace mmm::nn {

namespace {

enum class TapeMode { off, record, replay };

struct SgTape {
  TapeMode mode = TapeMode::off;
  std::vector<Tensor> values;
  std::size_t cursor = 0;
};

thread_local SgTape* g_tape = nullptr;

class TapeScope {
 public:
  TapeScope(SgTape& tape, TapeMode mode) : previous_(g_tape) {
    tape.mode = mode;
    tape.cursor = 0;
    g_tape = &tape;
  }
  ~TapeScope() { g_tape = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  SgTape* previous_;
};

float eval_scalar(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
  const Tensor y = f(x);
  const float v = y.item();
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::value, "grad_check", "function value is not finite");
  }
  return v;
}

}  // namespace

namespace detail {

Tensor sg_tape_pass(const Tensor& value) {
  if (g_tape == nullptr || g_tape->mode == TapeMode::off) {
    return value;
  }
  if (g_tape->mode == TapeMode::record) {
    g_tape->values.push_back(value);
    return value;
  }
  if (g_tape->cursor >= g_tape->values.size()) {
    throw Error(ErrorKind::state, "grad_check", "function issued more stop_gradient calls than when recorded");
  }
  const Tensor& held = g_tape->values[g_tape->cursor++];
  if (held.shape() != value.shape()) {
    throw Error(ErrorKind::shape, "grad_check", "replayed stop_gradient shape " + shape_str(held.shape()) +
                                                    " differs from " + shape_str(value.shape()));
  }
  return held;
}

}  // namespace detail

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, float eps) {
  if (!(eps > 0.0f)) {
    throw Error(ErrorKind::value, "grad_check", "eps must be positive");
  }
  std::vector<float> base(x.values().begin(), x.values().end());
  Tensor probe = Tensor::from(x.shape(), base, true);
  SgTape tape;
  {
    TapeScope scope(tape, TapeMode::record);
    const Tensor y = f(probe);
    if (!std::isfinite(y.item())) {
      throw Error(ErrorKind::value, "grad_check", "function value is not finite");
    }
    y.backward();
  }
  const std::vector<float> analytic = probe.grad();
  for (float g : analytic) {
    if (!std::isfinite(g)) {
      throw Error(ErrorKind::value, "grad_check", "analytic gradient is not finite");
    }
  }
  double worst = 0.0;
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < base.size(); ++i) {
    Tensor moved = Tensor::from(x.shape(), base, false);
    moved.mutable_values()[i] = base[i] + eps;
    float up = 0.0f;
    {
      TapeScope scope(tape, TapeMode::replay);
      up = eval_scalar(f, moved);
    }
    moved.mutable_values()[i] = base[i] - eps;
    float down = 0.0f;
    {
      TapeScope scope(tape, TapeMode::replay);
      down = eval_scalar(f, moved);
    }
    const double numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * static_cast<double>(eps));
    const double err = std::abs(static_cast<double>(analytic[i]) - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace mmm::nn
