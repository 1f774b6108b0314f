#pragma once

#include <functional>

#include "mmm/numerics/tensor.hpp"

namespace mmm::nn {

/// Maximum over coordinates of |analytic - numeric| / max(1, |numeric|),
/// with the numeric gradient from central differences of step `eps`.
///
/// stop_gradient arguments are held at their unperturbed values during the
/// finite-difference evaluations: the first call to f records every
/// stop_gradient output in order and later calls replay them. f must
/// therefore issue the same sequence of stop_gradient calls each time.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, float eps);

namespace detail {

/// Hook used by stop_gradient; returns the replayed value when a replay is
/// active, otherwise records `value` (when recording) and returns it.
Tensor sg_tape_pass(const Tensor& value);

}  // namespace detail

}  // namespace mmm::nn
