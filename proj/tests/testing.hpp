#pragma once

// Shared oracles for the unit tests and the acceptance gate.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "mtsnn/model.hpp"
#include "mtsnn/neuron.hpp"
#include "mtsnn/ops.hpp"
#include "mtsnn/rng.hpp"
#include "mtsnn/tensor.hpp"
#include "mtsnn/train.hpp"

namespace mtsnn::testing {

inline Tensor<double> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0, double offset = 0.0,
                                    bool requires_grad = false) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = offset + scale * standard_normal(rng);
  return Tensor<double>(shape, std::move(v), requires_grad);
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

/// Error between an analytic and a numeric derivative, relative with a unit
/// floor so that near-zero entries are compared absolutely.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Largest relative error between backward() and central differences of
/// `f` over every element of every input.
inline double gradcheck(const ScalarFn& f, const std::vector<Tensor<double>>& inputs, double eps = 1e-5) {
  std::vector<Tensor<double>> leaves;
  for (const auto& x : inputs) {
    leaves.emplace_back(x.shape(), std::vector<double>(x.values().begin(), x.values().end()), true);
  }
  const Tensor<double> loss = f(leaves);
  const Gradients<double> grads = backward(loss);

  NoGradGuard no_grad;
  double worst = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<Tensor<double>> probe;
    for (const auto& x : inputs) probe.push_back(x.detach());
    const std::vector<double> base(inputs[i].values().begin(), inputs[i].values().end());
    for (std::size_t j = 0; j < base.size(); ++j) {
      auto eval = [&](double shift) {
        std::vector<double> v = base;
        v[j] += shift;
        probe[i] = Tensor<double>(inputs[i].shape(), std::move(v));
        return f(probe).item();
      };
      const double numeric = (eval(eps) - eval(-eps)) / (2 * eps);
      const double analytic = grads.contains(leaves[i]) ? grads.at(leaves[i]).at(j) : 0.0;
      worst = std::max(worst, relative_error(analytic, numeric));
    }
  }
  return worst;
}


struct GradCase {
  std::string name;
  ScalarFn f;
  std::vector<Tensor<double>> inputs;
};

/// Every differentiable primitive over a spread of shapes, each reduced to a
/// scalar by a fixed random weighting.
inline std::vector<GradCase> primitive_cases() {
  using Inputs = std::vector<Tensor<double>>;
  std::vector<GradCase> cases;
  Rng rng(4);
  auto push = [&](const char* name, ScalarFn f, Inputs in) { cases.push_back({name, std::move(f), std::move(in)}); };
  // Weighted sums keep the upstream gradient non-uniform.
  auto weighted = [](const Tensor<double>& y, std::uint64_t seed) {
    Rng r(seed);
    return sum(mul(y, random_tensor(y.shape(), r).detach()));
  };
  for (const Shape& s : {Shape{3}, Shape{2, 3}, Shape{2, 2, 3}}) {
    push("add", [=](const Inputs& in) { return weighted(add(in[0], in[1]), 1); },
          {random_tensor(s, rng), random_tensor(s, rng)});
    push("sub", [=](const Inputs& in) { return weighted(sub(in[0], in[1]), 2); },
          {random_tensor(s, rng), random_tensor(s, rng)});
    push("mul", [=](const Inputs& in) { return weighted(mul(in[0], in[1]), 3); },
          {random_tensor(s, rng), random_tensor(s, rng)});
    push("div", [=](const Inputs& in) { return weighted(div(in[0], in[1]), 4); },
          {random_tensor(s, rng), random_tensor(s, rng, 0.3, 2.0)});
    push("scale", [=](const Inputs& in) { return weighted(scale(in[0], 1.7), 5); }, {random_tensor(s, rng)});
    push("relu", [=](const Inputs& in) { return weighted(relu(in[0]), 6); }, {random_tensor(s, rng)});
    push("sigmoid", [=](const Inputs& in) { return weighted(sigmoid(in[0]), 7); }, {random_tensor(s, rng)});
    push("mean", [=](const Inputs& in) { return mean(mul(in[0], in[0])); }, {random_tensor(s, rng)});
  }
  push("add_broadcast", [=](const Inputs& in) { return weighted(add(in[0], in[1]), 8); },
        {random_tensor({4, 3}, rng), random_tensor({3}, rng)});
  for (auto [m, k, n] : {std::tuple{1, 1, 1}, {2, 3, 4}, {5, 2, 3}}) {
    const auto M = static_cast<std::size_t>(m), K = static_cast<std::size_t>(k), N = static_cast<std::size_t>(n);
    push("matmul", [=](const Inputs& in) { return weighted(matmul(in[0], in[1]), 9); },
          {random_tensor({M, K}, rng), random_tensor({K, N}, rng)});
    push("linear", [=](const Inputs& in) { return weighted(linear(in[0], in[1], in[2]), 10); },
          {random_tensor({M, K}, rng), random_tensor({N, K}, rng), random_tensor({N}, rng)});
  }
  for (auto [k, stride, pad] : {std::tuple{3, 1, Padding::Same}, {3, 2, Padding::Same}, {1, 1, Padding::Valid},
                                {3, 1, Padding::Valid}, {5, 2, Padding::Same}}) {
    const Conv2dOptions o{static_cast<std::size_t>(stride), pad};
    const auto ks = static_cast<std::size_t>(k);
    push("conv2d", [=](const Inputs& in) { return weighted(conv2d(in[0], in[1], o), 11); },
          {random_tensor({2, 2, 6, 5}, rng), random_tensor({3, 2, ks, ks}, rng)});
  }
  for (std::size_t p : {2, 3}) {
    push("avg_pool2d", [=](const Inputs& in) { return weighted(avg_pool2d(in[0], p), 12); },
          {random_tensor({2, 2, 6, 6}, rng)});
    push("max_pool2d", [=](const Inputs& in) { return weighted(max_pool2d(in[0], p), 13); },
          {random_tensor({2, 2, 6, 6}, rng)});
  }
  push("reshape", [=](const Inputs& in) { return weighted(reshape(in[0], {6, 2}), 14); },
        {random_tensor({3, 4}, rng)});
  push("log_softmax+nll",
        [=](const Inputs& in) {
          const std::vector<int> labels{0, 2, 1};
          return nll_loss(log_softmax(in[0]), labels);
        },
        {random_tensor({3, 4}, rng)});
  push("slice_rows", [=](const Inputs& in) { return weighted(slice_rows(in[0], 1, 2), 15); },
        {random_tensor({4, 3}, rng)});
  push("concat_rows",
        [=](const Inputs& in) {
          const std::vector<Tensor<double>> parts{in[0], in[1]};
          return weighted(concat_rows<double>(parts), 16);
        },
        {random_tensor({2, 3}, rng), random_tensor({1, 3}, rng)});
  push("mean_over_steps", [=](const Inputs& in) { return weighted(mean_over_steps(in[0], 3), 17); },
        {random_tensor({6, 4}, rng)});
  push("group_mean", [=](const Inputs& in) { return weighted(group_mean(in[0], 2), 18); },
        {random_tensor({3, 6}, rng)});
  for (const Shape& s : {Shape{4, 3}, Shape{2, 3, 2, 2}}) {
    push("batch_norm_train",
          [=](const Inputs& in) { return weighted(batch_norm_train(in[0], in[1], in[2], 1e-5), 19); },
          {random_tensor(s, rng), random_tensor({3}, rng, 0.2, 1.0), random_tensor({3}, rng)});
  }
  for (NeuronKind kind : {NeuronKind::PLIF, NeuronKind::IF}) {
    push("membrane_dynamics",
         [=](const Inputs& in) {
           NeuronParams<double> p;
           p.kind = kind;
           p.a = in[2];
           return weighted(membrane_dynamics(in[0], in[1], p), 20);
         },
         {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng), Tensor<double>::scalar(0.4)});
  }
  push("threshold_spikes_ramp",
       [=](const Inputs& in) {
         const std::vector<double> offsets{-0.3, 0.0, 0.3};
         return weighted(threshold_spikes<double>(in[0], 1.0, offsets, 1.0, SpikeForward::SurrogateRamp), 21);
       },
       {random_tensor({3, 4}, rng, 0.6, 1.0)});
  return cases;
}

/// Compares backward() of the classification loss against central
/// differences for up to `per_param` entries of every parameter. The model
/// should use SpikeForward::SurrogateRamp so the loss is differentiable.
inline double model_gradcheck(Model<double>& model, const Tensor<double>& input, const std::vector<int>& labels,
                              std::size_t per_param = 6, double eps = 1e-5) {
  auto loss_of = [&] { return classification_loss(model.forward(input, Mode::Train), labels, LossKind::SoftmaxCe); };
  const auto params = model.parameters();
  const Gradients<double> grads = backward(loss_of());
  NoGradGuard no_grad;
  double worst = 0;
  for (const auto& p : params) {
    Tensor<double> handle = p.tensor;
    auto values = handle.mutable_values();
    const std::size_t stride = std::max<std::size_t>(1, values.size() / per_param);
    for (std::size_t j = 0; j < values.size(); j += stride) {
      const double saved = values[j];
      values[j] = saved + eps;
      const double up = loss_of().item();
      values[j] = saved - eps;
      const double down = loss_of().item();
      values[j] = saved;
      const double analytic = grads.contains(p.tensor) ? grads.at(p.tensor).at(j) : 0.0;
      worst = std::max(worst, relative_error(analytic, (up - down) / (2 * eps)));
    }
  }
  return worst;
}

}  // namespace mtsnn::testing
