#include "mmm/numerics/tensor.hpp"

#include <malloc.h>

#include <sstream>
#include <unordered_set>

#include "mmm/error.hpp"

namespace mmm::nn {

void retain_heap_memory() noexcept {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
}

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> new_leaf(Shape shape, std::vector<float> values, bool requires_grad) {
  for (int d : shape) {
    if (d <= 0) {
      throw Error(ErrorKind::shape, "tensor", "non-positive dimension in " + shape_str(shape));
    }
  }
  if (shape_numel(shape) != values.size()) {
    throw Error(ErrorKind::shape, "tensor",
                "shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                    " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<float>(n, 0.0f), requires_grad));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<float>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  return Tensor(new_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return Tensor(new_leaf({1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const {
  if (!node_) {
    throw Error(ErrorKind::state, "tensor", "use of undefined tensor");
  }
  return node_->shape;
}

int Tensor::dim(int axis) const {
  const Shape& s = shape();
  const int r = static_cast<int>(s.size());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw Error(ErrorKind::shape, "tensor", "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[static_cast<std::size_t>(a)];
}

float Tensor::item() const {
  if (numel() != 1) {
    throw Error(ErrorKind::shape, "item", "tensor of shape " + shape_str(shape()) + " is not a scalar");
  }
  return node_->value[0];
}

void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }

std::vector<float> Tensor::grad() const {
  if (!node_->grad.empty()) {
    return node_->grad;
  }
  return std::vector<float>(node_->value.size(), 0.0f);
}

std::span<float> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
  }
}

void Tensor::backward() const {
  if (!node_ || node_->value.size() != 1) {
    throw Error(ErrorKind::shape, "backward",
                "loss must be a scalar, got shape " + (node_ ? shape_str(node_->shape) : std::string("<undefined>")));
  }
  if (!node_->requires_grad) {
    return;
  }
  // Iterative post-order DFS; only nodes that require grad are visited.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) {
        stack.emplace_back(p, 0);
      }
      continue;
    }
    order.push_back(n);
    stack.pop_back();
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) {
      n->backward(*n);
    }
  }
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

Tensor make_result(const char* op, Shape shape, std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->value.assign(shape_numel(shape), 0.0f);
  node->shape = std::move(shape);
  if (g_grad_enabled) {
    for (const Tensor* t : inputs) {
      if (t != nullptr && t->requires_grad()) {
        node->requires_grad = true;
      }
    }
    if (node->requires_grad) {
      for (const Tensor* t : inputs) {
        if (t != nullptr && t->defined()) {
          node->parents.push_back(t->node_ptr());
        }
      }
    }
  }
  return Tensor(std::move(node));
}

Tensor make_result(const char* op, Shape shape, const std::vector<Tensor>& inputs) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->value.assign(shape_numel(shape), 0.0f);
  node->shape = std::move(shape);
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) {
        node->requires_grad = true;
      }
    }
    if (node->requires_grad) {
      for (const Tensor& t : inputs) {
        node->parents.push_back(t.node_ptr());
      }
    }
  }
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace mmm::nn
