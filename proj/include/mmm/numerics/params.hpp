#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mmm/numerics/rng.hpp"
#include "mmm/numerics/tensor.hpp"

namespace mmm::nn {

/// Ordered, uniquely named collection of trainable tensors and persistent
/// buffers. Order is registration order and fixes the checkpoint layout.
class ParamSet {
 public:
  /// Registers `t` under `name`; duplicate names are an error.
  Tensor add(const std::string& name, Tensor t);

  const std::vector<std::pair<std::string, Tensor>>& items() const noexcept { return items_; }
  const Tensor* find(const std::string& name) const;
  const Tensor& get(const std::string& name) const;

  void zero_grad();
  std::size_t numel() const;
  /// Copies all values from `other` (same names and shapes, any order).
  void copy_from(const ParamSet& other);

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

Tensor init_normal(Shape shape, float stddev, Rng& rng, bool requires_grad = true);
Tensor init_uniform(Shape shape, float bound, Rng& rng, bool requires_grad = true);

/// FNV-1a over the little-endian bytes of every value, in registration order.
std::uint64_t hash_values(const ParamSet& params);

}  // namespace mmm::nn
