#pragma once

// Integrate-and-fire neuron dynamics with single- and multiple-threshold
// firing.
//
// Discrete-time update per step t, with V_reset fixed at 0:
//   H[t] = f(V[t-1], X[t])                       membrane charge
//   S[t] = step(H[t] - V_th)                     base spike, step(0) = 1
//   V[t] = H[t] * (1 - S[t])                     hard reset on the base spike
// where f is V + X (IF) or (1 - 1/tau) V + (1/tau) X (LIF/PLIF) with
// tau = 1 + exp(-a). PLIF learns a; LIF keeps it fixed.
//
// Multiple thresholds add auxiliary spikes S_i = step(H - V_th - delta_i);
// the layer emits S_sum = S + sum_i S_i, an integer in [0, n + 1]. Only the
// base spike drives the reset.
//
// The step function's derivative is replaced by a rectangular window of
// width w and height 1 / w centred on each threshold; the windows add up
// for S_sum.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtsnn/tensor.hpp"

namespace mtsnn {

enum class NeuronKind { IF, LIF, PLIF, Relu };

/// Relu is a non-spiking baseline (ANN counterpart) and has no membrane.
bool is_spiking(NeuronKind kind);
std::string to_string(NeuronKind kind);
NeuronKind parse_neuron_kind(const std::string& text);

/// Forward map used for spikes. SurrogateRamp swaps the step for the ramp
/// whose derivative is exactly the rectangular window; it exists so that
/// finite differences can check surrogate gradients end to end.
enum class SpikeForward { Heaviside, SurrogateRamp };

enum class MtScope { ConvOnly, ConvAndFc };
std::string to_string(MtScope scope);
MtScope parse_mt_scope(const std::string& text);

struct MTConfig {
  std::vector<double> deltas;
  MtScope scope = MtScope::ConvAndFc;
  bool apply_to_encoder = true;

  /// Throws std::invalid_argument on duplicate or non-finite thresholds.
  void validate(double v_th) const;
};

double tau_from_a(double a);
double dtau_da(double a);

template <typename T>
struct NeuronParams {
  NeuronKind kind = NeuronKind::PLIF;
  T v_th = T{1};
  T surrogate_width = T{1};
  /// Shape [1]. Gradient-requiring for PLIF.
  Tensor<T> a = Tensor<T>::scalar(T{1});
  SpikeForward spike_forward = SpikeForward::Heaviside;

  static constexpr T v_reset = T{0};

  void validate() const;
  T tau() const;
};

template <typename T>
struct NeuronState {
  Tensor<T> v;  // undefined until the first step: treated as all zeros
};

template <typename T>
struct FireResult {
  Tensor<T> base;  // binary spike at V_th, drives the reset
  Tensor<T> sum;   // base plus every auxiliary spike
};

template <typename T>
struct StepResult {
  NeuronState<T> state;
  Tensor<T> membrane;  // H[t]
  Tensor<T> spikes;    // S_sum[t]
};

/// Elementwise 1 where x >= 0, else 0. Not differentiable; no tape.
template <typename T>
Tensor<T> heaviside(const Tensor<T>& x);

/// (1 / width) where |h - threshold| <= width / 2, else 0.
template <typename T>
Tensor<T> rectangular_window(const Tensor<T>& h, T threshold, T width);

/// Sum over `offsets` of step(h - v_th - offset) with summed rectangular
/// windows as the backward rule.
template <typename T>
Tensor<T> threshold_spikes(const Tensor<T>& h, T v_th, std::span<const T> offsets, T width, SpikeForward mode);

template <typename T>
Tensor<T> membrane_dynamics(const Tensor<T>& v_prev, const Tensor<T>& x, const NeuronParams<T>& params);

template <typename T>
Tensor<T> fire_st(const Tensor<T>& h, const NeuronParams<T>& params);

template <typename T>
FireResult<T> fire_mt(const Tensor<T>& h, const NeuronParams<T>& params, std::span<const double> deltas);

template <typename T>
FireResult<T> fire_mt(const Tensor<T>& h, const NeuronParams<T>& params, const MTConfig& mt) {
  return fire_mt(h, params, std::span<const double>(mt.deltas));
}

template <typename T>
Tensor<T> reset(const Tensor<T>& h, const Tensor<T>& s_base, const NeuronParams<T>& params);

template <typename T>
StepResult<T> step(const NeuronState<T>& state, const Tensor<T>& x, const NeuronParams<T>& params,
                   std::span<const double> deltas);

}  // namespace mtsnn
