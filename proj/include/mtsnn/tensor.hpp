#pragma once

// Dense tensors with a reverse-mode gradient tape.
//
// A Tensor is a cheap handle to an immutable node. Operations that see at
// least one gradient-requiring input record their inputs and a backward rule
// on the result node, so the "tape" is the DAG reachable from a loss. The
// graph is released when the last handle to it goes away.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mtsnn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised for any shape incompatibility; the message names the op and shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
struct Node {
  using BackwardFn = std::function<void(Node&)>;

  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily while backpropagating
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;  // reads this->grad, accumulates into inputs
  const char* op_tag = "leaf";

  bool is_leaf() const { return !backward; }

  /// Gradient buffer of this node, zero-initialised on first use.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T{0});
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return values().size(); }

  std::span<const T> values() const;
  T at(std::size_t flat_index) const { return values()[flat_index]; }
  T item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Same values, no tape history and no gradient.
  Tensor detach() const;

  /// In-place access for leaf tensors (parameters). Throws for op results.
  std::span<T> mutable_values();

  /// Identity of the underlying node; used as the key of gradient maps.
  const Node<T>* id() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  static Tensor from_node(std::shared_ptr<Node<T>> node);

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Result of backward(): dLoss/dX for every gradient-requiring leaf reached.
template <typename T>
class Gradients {
 public:
  bool contains(const Tensor<T>& leaf) const { return grads_.count(leaf.id()) != 0; }
  const Tensor<T>& at(const Tensor<T>& leaf) const;
  std::size_t size() const { return grads_.size(); }

  void insert(const Node<T>* key, Tensor<T> grad) { grads_.insert_or_assign(key, std::move(grad)); }

 private:
  std::unordered_map<const Node<T>*, Tensor<T>> grads_;
};

/// Reverse-mode sweep from a scalar loss. Throws if the loss is not scalar or
/// carries no tape.
template <typename T>
Gradients<T> backward(const Tensor<T>& loss);

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

namespace detail {

/// Builds an op result. The backward rule is attached only when recording is
/// enabled and some input requires a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::vector<Tensor<T>> inputs,
                      typename Node<T>::BackwardFn backward, const char* tag);

}  // namespace detail

}  // namespace mtsnn
