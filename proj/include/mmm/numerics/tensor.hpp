#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mmm::nn {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // allocated lazily, same size as value
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) {
      grad.assign(value.size(), 0.0f);
    }
  }
};

/// Reference-semantics handle to a node of the autodiff graph.
///
/// Copies share the node. Values are treated as immutable once an op has
/// consumed them; only leaves (parameters) are updated in place, and only
/// between graph constructions.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(int axis) const;  // negative axes count from the back
  int rank() const { return static_cast<int>(shape().size()); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const float> values() const { return node_->value; }
  std::span<float> mutable_values() { return node_->value; }
  float item() const;
  float at(std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  /// Gradient buffer; zeros when backward never reached this tensor.
  std::vector<float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();

  /// Reverse-mode pass from a scalar loss.
  void backward() const;

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const noexcept { return node_; }

  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

/// Graph recording is on by default; NoGradGuard disables it for the
/// current thread (inference forward passes).
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Keeps large freed blocks in the heap instead of returning them to the
/// OS. Graph buffers are reallocated every step, and fresh mmap'd pages cost
/// a page fault each. Call once at program start.
void retain_heap_memory() noexcept;

namespace detail {

/// Creates the output node of an op. Links parents only when recording.
Tensor make_result(const char* op, Shape shape, std::initializer_list<const Tensor*> inputs);
Tensor make_result(const char* op, Shape shape, const std::vector<Tensor>& inputs);

}  // namespace detail

}  // namespace mmm::nn
