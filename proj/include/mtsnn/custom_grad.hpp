#pragma once

#include <functional>
#include <string>

#include "mtsnn/tensor.hpp"

namespace mtsnn {

/// Elementwise primitive whose derivative is supplied by the caller.
///
/// The forward map runs as given. On the backward sweep the upstream gradient
/// is multiplied elementwise by `local_grad(input)`, where `input` is the
/// value the forward saw. This is how a non-differentiable step function gets
/// a surrogate derivative.
template <typename T>
class CustomGrad {
 public:
  using Fn = std::function<Tensor<T>(const Tensor<T>&)>;

  CustomGrad(Fn forward, Fn local_grad, std::string tag = "custom_grad");

  Tensor<T> operator()(const Tensor<T>& x) const;

 private:
  Fn forward_;
  Fn local_grad_;
  std::string tag_;
};

}  // namespace mtsnn
