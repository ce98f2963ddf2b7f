#include "mtsnn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace mtsnn {

std::string to_string(PoolKind kind) { return kind == PoolKind::Average ? "avg" : "max"; }

PoolKind parse_pool_kind(const std::string& text) {
  if (text == "avg" || text == "average") return PoolKind::Average;
  if (text == "max") return PoolKind::Max;
  throw std::invalid_argument("unknown pool kind '" + text + "' (expected avg or max)");
}

template <typename T>
Tensor<T> Activation<T>::at_step(std::size_t t) const {
  if (t >= steps) throw std::out_of_range("activation: step " + std::to_string(t) + " of " + std::to_string(steps));
  if (repeated) return data;
  const std::size_t b = batch();
  return slice_rows(data, t * b, b);
}

template <typename T>
Activation<T> Activation<T>::materialize() const {
  if (!repeated) return *this;
  std::vector<Tensor<T>> copies(steps, data);
  return Activation{concat_rows(std::span<const Tensor<T>>(copies)), steps, false};
}

template <typename T>
Tensor<T> he_normal(const Shape& shape, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<T> values(numel(shape));
  for (auto& v : values) v = static_cast<T>(standard_normal(rng) * stddev);
  return Tensor<T>(shape, std::move(values), true);
}

template <typename T>
Conv2dLayer<T>::Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                            Conv2dOptions options_, Rng& rng)
    : weight(he_normal<T>(Shape{out_channels, in_channels, kernel, kernel}, in_channels * kernel * kernel, rng)),
      options(options_) {}

template <typename T>
Activation<T> Conv2dLayer<T>::forward(const Activation<T>& x) const {
  return x.map([&](const Tensor<T>& d) { return conv2d(d, weight, options); });
}

template <typename T>
BatchNormLayer<T>::BatchNormLayer(std::size_t channels, T momentum_, T epsilon_)
    : gamma(Tensor<T>::full(Shape{channels}, T{1}, true)),
      beta(Tensor<T>::zeros(Shape{channels}, true)),
      running_mean(channels, T{0}),
      running_var(channels, T{1}),
      momentum(momentum_),
      epsilon(epsilon_) {
  if (!(epsilon > T{0})) throw std::invalid_argument("batch norm: epsilon must be positive");
}

template <typename T>
Tensor<T> BatchNormLayer<T>::forward(const Tensor<T>& x, Mode mode) {
  if (mode == Mode::Eval) return batch_norm_eval<T>(x, gamma, beta, running_mean, running_var, epsilon);
  BatchStats<T> stats;
  Tensor<T> y = batch_norm_train(x, gamma, beta, epsilon, &stats);
  for (std::size_t c = 0; c < running_mean.size(); ++c) {
    running_mean[c] = (T{1} - momentum) * running_mean[c] + momentum * stats.mean[c];
    running_var[c] = (T{1} - momentum) * running_var[c] + momentum * stats.variance[c];
  }
  return y;
}

template <typename T>
Activation<T> BatchNormLayer<T>::forward(const Activation<T>& x, Mode mode) {
  return x.map([&](const Tensor<T>& d) { return forward(d, mode); });
}

template <typename T>
void BatchNormLayer<T>::folded_affine(std::vector<T>& scale, std::vector<T>& shift) const {
  const std::size_t c = channels();
  scale.resize(c);
  shift.resize(c);
  auto g = gamma.values();
  auto b = beta.values();
  for (std::size_t i = 0; i < c; ++i) {
    scale[i] = g[i] / std::sqrt(running_var[i] + epsilon);
    shift[i] = b[i] - running_mean[i] * scale[i];
  }
}

template <typename T>
DenseLayer<T>::DenseLayer(std::size_t in_features, std::size_t out_features, Rng& rng)
    : weight(he_normal<T>(Shape{out_features, in_features}, in_features, rng)),
      bias(Tensor<T>::zeros(Shape{out_features}, true)) {}

template <typename T>
Activation<T> DenseLayer<T>::forward(const Activation<T>& x) const {
  return x.map([&](const Tensor<T>& d) { return linear(d, weight, bias); });
}

template <typename T>
NeuronLayer<T>::NeuronLayer(NeuronParams<T> params_, std::vector<double> deltas_)
    : params(std::move(params_)), deltas(std::move(deltas_)) {
  params.validate();
  MTConfig{deltas, MtScope::ConvAndFc, true}.validate(static_cast<double>(params.v_th));
}

template <typename T>
Activation<T> NeuronLayer<T>::forward(const Activation<T>& current, std::vector<Tensor<T>>* membranes) const {
  if (!is_spiking(params.kind)) return current.map([](const Tensor<T>& d) { return relu(d); });
  if (membranes) membranes->clear();
  NeuronState<T> state;
  std::vector<Tensor<T>> spikes;
  spikes.reserve(current.steps);
  for (std::size_t t = 0; t < current.steps; ++t) {
    StepResult<T> r = step(state, current.at_step(t), params, deltas);
    state = std::move(r.state);
    spikes.push_back(std::move(r.spikes));
    if (membranes) membranes->push_back(std::move(r.membrane));
  }
  Tensor<T> data = current.steps == 1 ? spikes[0] : concat_rows(std::span<const Tensor<T>>(spikes));
  return Activation<T>{data, current.steps, false};
}

template <typename T>
Activation<T> PoolLayer<T>::forward(const Activation<T>& x) const {
  return x.map([&](const Tensor<T>& d) { return kind == PoolKind::Average ? avg_pool2d(d, size) : max_pool2d(d, size); });
}

template <typename T>
Tensor<T> membrane_residual_add(const Tensor<T>& main, const Tensor<T>& skip) {
  if (main.shape() != skip.shape()) {
    throw ShapeError("membrane_residual_add: main path " + to_string(main.shape()) + " and skip path " +
                     to_string(skip.shape()) + " differ; a projection is required");
  }
  return add(main, skip);
}

template <typename T>
Activation<T> ConvBnNeuron<T>::forward(const Activation<T>& x, Mode mode, Activation<T>* current,
                                       std::vector<Tensor<T>>* membranes) {
  Activation<T> u = bn.forward(conv.forward(x), mode);
  if (current) *current = u;
  return neuron.forward(u, membranes);
}

template <typename T>
Tensor<T> ConvBnNeuron<T>::step(const Tensor<T>& x_t, NeuronState<T>& state, Mode mode) {
  if (x_t.rank() != 4) throw ShapeError("conv_bn_neuron: expected [batch, ch, h, w], got " + to_string(x_t.shape()));
  Tensor<T> u = bn.forward(conv2d(x_t, conv.weight, conv.options), mode);
  if (!is_spiking(neuron.params.kind)) return relu(u);
  StepResult<T> r = mtsnn::step(state, u, neuron.params, neuron.deltas);
  state = std::move(r.state);
  return r.spikes;
}

#define MTSNN_INSTANTIATE_LAYERS(T)                                                       \
  template struct Activation<T>;                                                          \
  template Tensor<T> he_normal(const Shape&, std::size_t, Rng&);                          \
  template class Conv2dLayer<T>;                                                          \
  template class BatchNormLayer<T>;                                                       \
  template class DenseLayer<T>;                                                           \
  template class NeuronLayer<T>;                                                          \
  template struct PoolLayer<T>;                                                           \
  template Tensor<T> membrane_residual_add(const Tensor<T>&, const Tensor<T>&);           \
  template class ConvBnNeuron<T>;

MTSNN_INSTANTIATE_LAYERS(float)
MTSNN_INSTANTIATE_LAYERS(double)

}  // namespace mtsnn
