#include "mmm/numerics/params.hpp"

#include <bit>

#include "mmm/error.hpp"

namespace mmm::nn {

Tensor ParamSet::add(const std::string& name, Tensor t) {
  if (find(name) != nullptr) {
    throw Error(ErrorKind::state, "params", "duplicate parameter name '" + name + "'");
  }
  items_.emplace_back(name, t);
  return t;
}

const Tensor* ParamSet::find(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) {
      return &t;
    }
  }
  return nullptr;
}

const Tensor& ParamSet::get(const std::string& name) const {
  const Tensor* t = find(name);
  if (t == nullptr) {
    throw Error(ErrorKind::state, "params", "no parameter named '" + name + "'");
  }
  return *t;
}

void ParamSet::zero_grad() {
  for (auto& [n, t] : items_) {
    t.zero_grad();
  }
}

std::size_t ParamSet::numel() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) {
    n += t.numel();
  }
  return n;
}

void ParamSet::copy_from(const ParamSet& other) {
  if (other.items_.size() != items_.size()) {
    throw Error(ErrorKind::state, "params", "parameter count mismatch");
  }
  for (auto& [name, t] : items_) {
    const Tensor& src = other.get(name);
    if (src.shape() != t.shape()) {
      throw Error(ErrorKind::shape, "params", "'" + name + "' is " + shape_str(t.shape()) + ", source is " + shape_str(src.shape()));
    }
    std::copy(src.values().begin(), src.values().end(), t.mutable_values().begin());
  }
}

Tensor init_normal(Shape shape, float stddev, Rng& rng, bool requires_grad) {
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) {
    x = static_cast<float>(rng.normal()) * stddev;
  }
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

Tensor init_uniform(Shape shape, float bound, Rng& rng, bool requires_grad) {
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) {
    x = rng.uniform(-bound, bound);
  }
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

std::uint64_t hash_values(const ParamSet& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, t] : params.items()) {
    for (float v : t.values()) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) {
        h ^= bits & 0xffu;
        h *= 0x100000001b3ull;
        bits >>= 8;
      }
    }
  }
  return h;
}

}  // namespace mmm::nn
