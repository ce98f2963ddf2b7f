#include "mtsnn/custom_grad.hpp"

#include "mtsnn/ops.hpp"

namespace mtsnn {

template <typename T>
CustomGrad<T>::CustomGrad(Fn forward, Fn local_grad, std::string tag)
    : forward_(std::move(forward)), local_grad_(std::move(local_grad)), tag_(std::move(tag)) {}

template <typename T>
Tensor<T> CustomGrad<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> y = forward_(x.detach());
  if (y.shape() != x.shape()) {
    throw ShapeError(tag_ + ": forward changed shape " + to_string(x.shape()) + " to " + to_string(y.shape()));
  }
  auto yv = y.values();
  return detail::make_result<T>(
      x.shape(), std::vector<T>(yv.begin(), yv.end()), {x},
      [local_grad = local_grad_, tag = tag_](Node<T>& self) {
        auto& in = *self.inputs[0];
        Tensor<T> local = local_grad(Tensor<T>(in.shape, in.value));
        if (local.shape() != in.shape) {
          throw ShapeError(tag + ": backward produced shape " + to_string(local.shape()) + " for input " +
                           to_string(in.shape));
        }
        auto lv = local.values();
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * lv[i];
      },
      "custom_grad");
}

template class CustomGrad<float>;
template class CustomGrad<double>;

}  // namespace mtsnn
