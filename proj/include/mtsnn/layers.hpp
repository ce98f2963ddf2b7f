#pragma once

// Trainable layers over time-unrolled activations.
//
// Stateless layers (convolution, batch norm, pooling, dense) process every
// time step at once on a step-major [steps * batch, ...] tensor, so batch
// norm statistics cover batch x time x space. Neuron layers walk the steps
// in order and carry membrane state. A static image presented at every step
// stays a single [batch, ...] tensor (`repeated`) until the first neuron.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mtsnn/neuron.hpp"
#include "mtsnn/ops.hpp"
#include "mtsnn/rng.hpp"
#include "mtsnn/tensor.hpp"

namespace mtsnn {

enum class Mode { Train, Eval };
enum class PoolKind { Average, Max };

std::string to_string(PoolKind kind);
PoolKind parse_pool_kind(const std::string& text);

template <typename T>
struct Activation {
  Tensor<T> data;
  std::size_t steps = 1;
  bool repeated = false;  // data is [batch, ...] and identical at every step

  std::size_t batch() const { return repeated ? data.dim(0) : data.dim(0) / steps; }
  /// Input of step t as [batch, ...].
  Tensor<T> at_step(std::size_t t) const;
  /// The same activation with `repeated` expanded to [steps * batch, ...].
  Activation materialize() const;
  /// Applies a per-sample map to the underlying tensor, keeping the layout.
  template <typename F>
  Activation map(F&& f) const {
    return Activation{f(data), steps, repeated};
  }
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Gaussian with std sqrt(2 / fan_in).
template <typename T>
Tensor<T> he_normal(const Shape& shape, std::size_t fan_in, Rng& rng);

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Conv2dOptions options, Rng& rng);

  Activation<T> forward(const Activation<T>& x) const;

  Tensor<T> weight;  // [out, in, k, k], no bias: batch norm follows
  Conv2dOptions options;
};

template <typename T>
class BatchNormLayer {
 public:
  explicit BatchNormLayer(std::size_t channels, T momentum = T{0.1}, T epsilon = T{1e-5});

  Activation<T> forward(const Activation<T>& x, Mode mode);
  Tensor<T> forward(const Tensor<T>& x, Mode mode);

  std::size_t channels() const { return gamma.numel(); }
  /// scale = gamma / sqrt(var + eps), shift = beta - mean * scale, from running stats.
  void folded_affine(std::vector<T>& scale, std::vector<T>& shift) const;

  Tensor<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  T momentum, epsilon;
};

template <typename T>
class DenseLayer {
 public:
  DenseLayer(std::size_t in_features, std::size_t out_features, Rng& rng);

  Activation<T> forward(const Activation<T>& x) const;

  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]
};

/// Spiking (or relu baseline) nonlinearity with per-layer thresholds.
template <typename T>
class NeuronLayer {
 public:
  NeuronLayer(NeuronParams<T> params, std::vector<double> deltas);

  /// Runs all steps from a zero membrane. When `membranes` is given it
  /// receives H[t] for every step.
  Activation<T> forward(const Activation<T>& current, std::vector<Tensor<T>>* membranes = nullptr) const;

  NeuronParams<T> params;
  std::vector<double> deltas;  // empty: single threshold
};

template <typename T>
struct PoolLayer {
  PoolKind kind = PoolKind::Average;
  std::size_t size = 2;

  Activation<T> forward(const Activation<T>& x) const;
};

template <typename T>
struct VotingLayer {
  std::size_t group_size = 10;

  Tensor<T> forward(const Tensor<T>& spikes) const { return group_mean(spikes, group_size); }
};

/// Membrane-level residual: sums the main-path and skip-path inputs of the
/// block's last neuron before it fires.
template <typename T>
Tensor<T> membrane_residual_add(const Tensor<T>& main, const Tensor<T>& skip);

/// Conv -> BN -> neuron, the unit every convolutional stage is made of. The
/// first one in a network turns pixels into spikes.
template <typename T>
class ConvBnNeuron {
 public:
  ConvBnNeuron(Conv2dLayer<T> conv, BatchNormLayer<T> bn, NeuronLayer<T> neuron)
      : conv(std::move(conv)), bn(std::move(bn)), neuron(std::move(neuron)) {}

  /// Whole sequence. Returns spikes; `current` receives the neuron input.
  Activation<T> forward(const Activation<T>& x, Mode mode, Activation<T>* current = nullptr,
                        std::vector<Tensor<T>>* membranes = nullptr);

  /// One time step on [batch, ch, h, w], batch norm applied to this step alone.
  Tensor<T> step(const Tensor<T>& x_t, NeuronState<T>& state, Mode mode);

  Conv2dLayer<T> conv;
  BatchNormLayer<T> bn;
  NeuronLayer<T> neuron;
};

}  // namespace mtsnn
