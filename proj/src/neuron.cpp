#include "mtsnn/neuron.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mtsnn/custom_grad.hpp"
#include "mtsnn/op_counter.hpp"
#include "mtsnn/ops.hpp"

namespace mtsnn {

bool is_spiking(NeuronKind kind) { return kind != NeuronKind::Relu; }

std::string to_string(NeuronKind kind) {
  switch (kind) {
    case NeuronKind::IF: return "if";
    case NeuronKind::LIF: return "lif";
    case NeuronKind::PLIF: return "plif";
    case NeuronKind::Relu: return "relu";
  }
  return "?";
}

NeuronKind parse_neuron_kind(const std::string& text) {
  if (text == "if") return NeuronKind::IF;
  if (text == "lif") return NeuronKind::LIF;
  if (text == "plif") return NeuronKind::PLIF;
  if (text == "relu") return NeuronKind::Relu;
  throw std::invalid_argument("unknown neuron kind '" + text + "' (expected if, lif, plif or relu)");
}

std::string to_string(MtScope scope) { return scope == MtScope::ConvOnly ? "conv_only" : "conv_and_fc"; }

MtScope parse_mt_scope(const std::string& text) {
  if (text == "conv_only") return MtScope::ConvOnly;
  if (text == "conv_and_fc") return MtScope::ConvAndFc;
  throw std::invalid_argument("unknown MT scope '" + text + "' (expected conv_only or conv_and_fc)");
}

void MTConfig::validate(double v_th) const {
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!std::isfinite(v_th + deltas[i])) throw std::invalid_argument("mt: threshold offset produces a non-finite threshold");
    for (std::size_t j = 0; j < i; ++j) {
      if (deltas[i] == deltas[j]) throw std::invalid_argument("mt: duplicate threshold offset " + std::to_string(deltas[i]));
    }
  }
}

double tau_from_a(double a) { return 1.0 + std::exp(-a); }
double dtau_da(double a) { return -std::exp(-a); }

template <typename T>
void NeuronParams<T>::validate() const {
  if (!(v_th > T{0})) throw std::invalid_argument("neuron: firing threshold must be positive");
  if (!(surrogate_width > T{0})) throw std::invalid_argument("neuron: surrogate width must be positive");
  if (!a.defined() || a.numel() != 1) throw std::invalid_argument("neuron: parameter a must be a single value");
}

template <typename T>
T NeuronParams<T>::tau() const {
  return static_cast<T>(tau_from_a(static_cast<double>(a.item())));
}

template <typename T>
Tensor<T> heaviside(const Tensor<T>& x) {
  auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] >= T{0} ? T{1} : T{0};
  record_ops("heaviside", 0, 0, xv.size());
  return Tensor<T>(x.shape(), std::move(out));
}

template <typename T>
Tensor<T> rectangular_window(const Tensor<T>& h, T threshold, T width) {
  auto hv = h.values();
  const T height = T{1} / width;
  const T half = width / T{2};
  std::vector<T> out(hv.size());
  for (std::size_t i = 0; i < hv.size(); ++i) out[i] = std::abs(hv[i] - threshold) <= half ? height : T{0};
  return Tensor<T>(h.shape(), std::move(out));
}

template <typename T>
Tensor<T> threshold_spikes(const Tensor<T>& h, T v_th, std::span<const T> offsets, T width, SpikeForward mode) {
  std::vector<T> offs(offsets.begin(), offsets.end());
  auto forward = [v_th, offs, width, mode](const Tensor<T>& in) {
    auto hv = in.values();
    std::vector<T> out(hv.size(), T{0});
    for (T off : offs) {
      for (std::size_t i = 0; i < hv.size(); ++i) {
        const T shifted = (hv[i] - v_th) - off;
        if (mode == SpikeForward::Heaviside) {
          out[i] += shifted >= T{0} ? T{1} : T{0};
        } else {
          out[i] += std::clamp(shifted / width + T{0.5}, T{0}, T{1});
        }
      }
    }
    record_ops("spike", 0, hv.size() * (offs.size() - 1), hv.size() * offs.size());
    return Tensor<T>(in.shape(), std::move(out));
  };
  auto window = [v_th, offs, width](const Tensor<T>& in) {
    auto hv = in.values();
    const T height = T{1} / width;
    const T half = width / T{2};
    std::vector<T> out(hv.size(), T{0});
    for (T off : offs)
      for (std::size_t i = 0; i < hv.size(); ++i) {
        const T shifted = (hv[i] - v_th) - off;
        if (std::abs(shifted) <= half) out[i] += height;
      }
    return Tensor<T>(in.shape(), std::move(out));
  };
  return CustomGrad<T>(forward, window, "spike")(h);
}

template <typename T>
Tensor<T> membrane_dynamics(const Tensor<T>& v_prev, const Tensor<T>& x, const NeuronParams<T>& params) {
  if (!is_spiking(params.kind)) throw std::invalid_argument("membrane_dynamics: relu units have no membrane");
  const bool have_v = v_prev.defined();
  if (have_v && v_prev.shape() != x.shape()) {
    throw ShapeError("membrane_dynamics: membrane " + to_string(v_prev.shape()) + " does not match input " +
                     to_string(x.shape()));
  }
  auto xv = x.values();
  const std::size_t n = xv.size();
  std::vector<T> out(n);
  std::vector<Tensor<T>> inputs{x};
  if (have_v) inputs.push_back(v_prev);

  if (params.kind == NeuronKind::IF) {
    for (std::size_t i = 0; i < n; ++i) out[i] = (have_v ? v_prev.values()[i] : T{0}) + xv[i];
    record_ops("neuron", 0, have_v ? n : 0);
    return detail::make_result<T>(
        x.shape(), std::move(out), inputs,
        [](Node<T>& self) {
          for (auto& in : self.inputs) {
            if (!in->requires_grad) continue;
            auto& g = in->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
          }
        },
        "membrane");
  }

  const T a = params.a.item();
  const T k = T{1} / (T{1} + std::exp(-a));  // 1 / tau
  const T keep = T{1} - k;
  for (std::size_t i = 0; i < n; ++i) out[i] = keep * (have_v ? v_prev.values()[i] : T{0}) + k * xv[i];
  record_ops("neuron", have_v ? 2 * n : n, have_v ? n : 0);
  const bool learn_a = params.kind == NeuronKind::PLIF;
  if (learn_a) inputs.push_back(params.a);
  return detail::make_result<T>(
      x.shape(), std::move(out), inputs,
      [k, keep, have_v, learn_a](Node<T>& self) {
        auto& nx = *self.inputs[0];
        Node<T>* nv = have_v ? self.inputs[1].get() : nullptr;
        Node<T>* na = learn_a ? self.inputs.back().get() : nullptr;
        const std::size_t n = self.grad.size();
        if (nx.requires_grad) {
          auto& g = nx.grad_buffer();
          for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * k;
        }
        if (nv && nv->requires_grad) {
          auto& g = nv->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * keep;
        }
        if (na && na->requires_grad) {
          // dH/da = (X - V) * k * (1 - k)
          T acc{0};
          for (std::size_t i = 0; i < n; ++i) {
            const T v = nv ? nv->value[i] : T{0};
            acc += self.grad[i] * (nx.value[i] - v);
          }
          na->grad_buffer()[0] += acc * k * keep;
        }
      },
      "membrane");
}

template <typename T>
Tensor<T> fire_st(const Tensor<T>& h, const NeuronParams<T>& params) {
  const T zero[1] = {T{0}};
  return threshold_spikes(h, params.v_th, std::span<const T>(zero), params.surrogate_width, params.spike_forward);
}

template <typename T>
FireResult<T> fire_mt(const Tensor<T>& h, const NeuronParams<T>& params, std::span<const double> deltas) {
  FireResult<T> result;
  result.base = fire_st(h, params);
  if (deltas.empty()) {
    result.sum = result.base;
    return result;
  }
  std::vector<T> offsets(deltas.begin(), deltas.end());
  Tensor<T> aux = threshold_spikes(h, params.v_th, std::span<const T>(offsets), params.surrogate_width,
                                   params.spike_forward);
  result.sum = add(result.base, aux);
  return result;
}

template <typename T>
Tensor<T> reset(const Tensor<T>& h, const Tensor<T>& s_base, const NeuronParams<T>&) {
  if (h.shape() != s_base.shape()) {
    throw ShapeError("reset: membrane " + to_string(h.shape()) + " does not match spikes " + to_string(s_base.shape()));
  }
  // V = H (1 - S) + V_reset S with V_reset = 0.
  auto hv = h.values();
  auto sv = s_base.values();
  std::vector<T> out(hv.size());
  for (std::size_t i = 0; i < hv.size(); ++i) out[i] = hv[i] * (T{1} - sv[i]);
  record_ops("reset", 0, 0, hv.size());
  return detail::make_result<T>(
      h.shape(), std::move(out), {h, s_base},
      [](Node<T>& self) {
        auto& nh = *self.inputs[0];
        auto& ns = *self.inputs[1];
        const std::size_t n = self.grad.size();
        if (nh.requires_grad) {
          auto& g = nh.grad_buffer();
          for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * (T{1} - ns.value[i]);
        }
        if (ns.requires_grad) {
          auto& g = ns.grad_buffer();
          for (std::size_t i = 0; i < n; ++i) g[i] -= self.grad[i] * nh.value[i];
        }
      },
      "reset");
}

template <typename T>
StepResult<T> step(const NeuronState<T>& state, const Tensor<T>& x, const NeuronParams<T>& params,
                   std::span<const double> deltas) {
  StepResult<T> result;
  result.membrane = membrane_dynamics(state.v, x, params);
  FireResult<T> fired = fire_mt(result.membrane, params, deltas);
  result.state.v = reset(result.membrane, fired.base, params);
  result.spikes = fired.sum;
  return result;
}

#define MTSNN_INSTANTIATE_NEURON(T)                                                                        \
  template struct NeuronParams<T>;                                                                         \
  template Tensor<T> heaviside(const Tensor<T>&);                                                          \
  template Tensor<T> rectangular_window(const Tensor<T>&, T, T);                                           \
  template Tensor<T> threshold_spikes(const Tensor<T>&, T, std::span<const T>, T, SpikeForward);           \
  template Tensor<T> membrane_dynamics(const Tensor<T>&, const Tensor<T>&, const NeuronParams<T>&);        \
  template Tensor<T> fire_st(const Tensor<T>&, const NeuronParams<T>&);                                    \
  template FireResult<T> fire_mt(const Tensor<T>&, const NeuronParams<T>&, std::span<const double>);       \
  template Tensor<T> reset(const Tensor<T>&, const Tensor<T>&, const NeuronParams<T>&);                    \
  template StepResult<T> step(const NeuronState<T>&, const Tensor<T>&, const NeuronParams<T>&,             \
                              std::span<const double>);

MTSNN_INSTANTIATE_NEURON(float)
MTSNN_INSTANTIATE_NEURON(double)

}  // namespace mtsnn
