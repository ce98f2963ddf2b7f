#include "mtsnn/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace mtsnn {

namespace {
thread_local bool g_recording = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }

bool grad_recording_enabled() { return g_recording; }

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in shape " + to_string(shape));
  }
  if (mtsnn::numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " needs " +
                     std::to_string(mtsnn::numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  node_ = std::make_shared<Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(shape, std::vector<T>(mtsnn::numel(shape), T{0}), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
  return Tensor(shape, std::vector<T>(mtsnn::numel(shape), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[axis];
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), node_->value, false);
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
  if (!node_) throw std::logic_error("tensor: use of undefined tensor");
  if (!node_->is_leaf()) throw std::logic_error("tensor: only leaf tensors may be modified in place");
  return node_->value;
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<Node<T>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
const Tensor<T>& Gradients<T>::at(const Tensor<T>& leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) {
    throw std::out_of_range("gradients: no gradient recorded for tensor of shape " + to_string(leaf.shape()));
  }
  return it->second;
}

template <typename T>
Gradients<T> backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) throw std::invalid_argument("backward: loss is not attached to a gradient tape");

  // Iterative post-order DFS gives a topological order with inputs first.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad.assign(1, T{1});
  Gradients<T> result;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->is_leaf()) {
      if (node->grad.empty()) node->grad.assign(node->value.size(), T{0});
      result.insert(node, Tensor<T>(node->shape, std::move(node->grad)));
      node->grad.clear();
      continue;
    }
    if (!node->grad.empty()) node->backward(*node);
    std::vector<T>().swap(node->grad);
  }
  return result;
}

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, std::vector<Tensor<T>> inputs,
                      typename Node<T>::BackwardFn backward_fn, const char* tag) {
  Tensor<T> out(std::move(shape), std::move(values));
  auto& node = *out.node();
  node.op_tag = tag;
  if (!g_recording) return out;
  bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!any) return out;
  node.requires_grad = true;
  node.backward = std::move(backward_fn);
  node.inputs.reserve(inputs.size());
  for (auto& in : inputs) node.inputs.push_back(in.node());
  return out;
}

template Tensor<float> make_result(Shape, std::vector<float>, std::vector<Tensor<float>>,
                                   Node<float>::BackwardFn, const char*);
template Tensor<double> make_result(Shape, std::vector<double>, std::vector<Tensor<double>>,
                                    Node<double>::BackwardFn, const char*);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;
template class Gradients<float>;
template class Gradients<double>;
template Gradients<float> backward(const Tensor<float>&);
template Gradients<double> backward(const Tensor<double>&);

}  // namespace mtsnn
