#pragma once

// Differentiable tensor primitives.
//
// Elementwise binary ops accept either identical shapes or a right operand
// whose shape equals the left operand's shape without its leading (batch)
// dimension. Anything else needs an explicit reshape.
//
// Layouts: images are [batch, channels, height, width], convolution kernels
// are [out_channels, in_channels, k, k], dense weights are [out, in].

#include <cstddef>
#include <span>
#include <vector>

#include "mtsnn/tensor.hpp"

namespace mtsnn {

enum class Padding { Valid, Same };

struct Conv2dOptions {
  std::size_t stride = 1;
  Padding padding = Padding::Valid;
};

/// Zero padding applied on each border: k / 2 for Same, 0 for Valid.
std::size_t conv_padding(std::size_t kernel, Padding padding);
std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t stride, Padding padding);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x [n, in] times weight [out, in] transposed, plus bias [out].
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);
template <typename T> Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, Conv2dOptions options = {});

/// Non-overlapping pooling with window = stride = `size`; trailing rows and
/// columns that do not fill a window are dropped.
template <typename T> Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t size);
template <typename T> Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t size);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);

/// Row-wise log-softmax of a [n, classes] tensor.
template <typename T> Tensor<T> log_softmax(const Tensor<T>& logits);
/// Mean over rows of -log_probs[row, label[row]].
template <typename T> Tensor<T> nll_loss(const Tensor<T>& log_probs, std::span<const int> labels);

/// Rows [begin, begin + count) of the leading dimension.
template <typename T> Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t count);
template <typename T> Tensor<T> concat_rows(std::span<const Tensor<T>> parts);

/// [steps * batch, ...] laid out step-major to [batch, ...]: (sum over steps) / steps.
template <typename T> Tensor<T> mean_over_steps(const Tensor<T>& x, std::size_t steps);

/// [n, groups * group_size] to [n, groups] by averaging consecutive units.
template <typename T> Tensor<T> group_mean(const Tensor<T>& x, std::size_t group_size);

template <typename T>
struct BatchStats {
  std::vector<T> mean;
  std::vector<T> variance;  // biased (population) variance
};

/// Per-channel normalisation with statistics over every axis except 1.
template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T epsilon,
                           BatchStats<T>* stats_out = nullptr);

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          std::span<const T> running_mean, std::span<const T> running_var, T epsilon);

namespace kernels {

// Row-major GEMM accumulators with a fixed summation order. No counting.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);  // c += a * b
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);  // c += a * b^T
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);  // c += a^T * b

}  // namespace kernels

}  // namespace mtsnn
