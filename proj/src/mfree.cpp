#include "mtsnn/mfree.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace mtsnn {

bool is_accumulation_tag(const std::string& tag) { return tag.rfind("accum", 0) == 0; }

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

struct ConvGeometry {
  std::size_t n, c, h, w, pool, hp, wp, o, k, stride, pad, oh, ow;
};

ConvGeometry conv_geometry(const Shape& spikes, std::size_t in_ch, std::size_t out_ch, std::size_t k,
                           Conv2dOptions options, std::size_t pool) {
  if (spikes.size() != 4) throw ShapeError("accum_conv: expected [n, c, h, w] spikes, got " + to_string(spikes));
  if (spikes[1] != in_ch) {
    throw ShapeError("accum_conv: spikes " + to_string(spikes) + " have " + std::to_string(spikes[1]) +
                     " channels, kernel expects " + std::to_string(in_ch));
  }
  if (pool == 0) throw std::invalid_argument("accum_conv: pool factor must be positive");
  ConvGeometry g{spikes[0], spikes[1], spikes[2], spikes[3], pool, spikes[2] / pool, spikes[3] / pool, out_ch, k,
                 options.stride, conv_padding(k, options.padding), 0, 0};
  g.oh = conv_output_size(g.hp, k, g.stride, options.padding);
  g.ow = conv_output_size(g.wp, k, g.stride, options.padding);
  if (g.oh == 0 || g.ow == 0) throw ShapeError("accum_conv: kernel larger than input " + to_string(spikes));
  return g;
}

template <typename T>
[[noreturn]] void not_binary(const char* op, T value, std::size_t index) {
  throw std::invalid_argument(std::string(op) + ": input is not binary (value " + std::to_string(value) +
                              " at index " + std::to_string(index) +
                              "); decompose multi-threshold spikes into per-threshold maps first");
}

// Adds kernel columns into out[n, o, oh, ow] for every active spike.
// Mutation hook for verification: a kernel that saw no active spike still
// performs the injected multiplication so the counter can catch it.
template <typename T>
void inject_silent(bool& inject, std::span<const T> weights, std::span<T> out, std::uint64_t& muls,
                   std::uint64_t& adds) {
  if (!inject || weights.empty() || out.empty()) return;
  out[0] += weights[0] * T{0};
  ++muls;
  ++adds;
  inject = false;
}

// kt is laid out [c, k, k, o].
template <typename T>
void scatter_conv(const Tensor<T>& spikes, std::span<const T> kt, const ConvGeometry& g, std::span<T> out,
                  bool& inject, std::string_view tag) {
  auto sv = spikes.values();
  std::uint64_t adds = 0, muls = 0;
  const std::size_t out_plane = g.oh * g.ow;
  for (std::size_t b = 0; b < g.n; ++b)
    for (std::size_t ci = 0; ci < g.c; ++ci)
      for (std::size_t y = 0; y < g.h; ++y)
        for (std::size_t x = 0; x < g.w; ++x) {
          const std::size_t idx = ((b * g.c + ci) * g.h + y) * g.w + x;
          const T s = sv[idx];
          if (s == T{0}) continue;
          if (s != T{1}) not_binary("accum_conv", s, idx);
          const std::size_t py = y / g.pool, px = x / g.pool;
          if (py >= g.hp || px >= g.wp) continue;
          for (std::size_t ky = 0; ky < g.k; ++ky) {
            const long ty = static_cast<long>(py + g.pad) - static_cast<long>(ky);
            if (ty < 0 || ty % static_cast<long>(g.stride) != 0) continue;
            const std::size_t oy = static_cast<std::size_t>(ty) / g.stride;
            if (oy >= g.oh) continue;
            for (std::size_t kx = 0; kx < g.k; ++kx) {
              const long tx = static_cast<long>(px + g.pad) - static_cast<long>(kx);
              if (tx < 0 || tx % static_cast<long>(g.stride) != 0) continue;
              const std::size_t ox = static_cast<std::size_t>(tx) / g.stride;
              if (ox >= g.ow) continue;
              const T* col = kt.data() + ((ci * g.k + ky) * g.k + kx) * g.o;
              T* dst = out.data() + b * g.o * out_plane + oy * g.ow + ox;
              std::size_t oc = 0;
              if (inject) {
                dst[0] += col[0] * s;
                ++muls;
                ++adds;
                oc = 1;
                inject = false;
              }
              for (; oc < g.o; ++oc) dst[oc * out_plane] += col[oc];
              adds += g.o;
            }
          }
        }
  inject_silent(inject, kt, out, muls, adds);
  record_ops(tag, muls, adds - muls, sv.size());
}

// Adds weight columns into out[n, o] for every active spike. wt is [in, o].
template <typename T>
void scatter_fc(const Tensor<T>& spikes, std::span<const T> wt, std::size_t in_features, std::size_t out_features,
                std::size_t pool, std::span<T> out, bool& inject, std::string_view tag) {
  const Shape& s = spikes.shape();
  std::size_t n = s.at(0), c = 1, h = 1, w = 1;
  if (s.size() == 2) {
    if (pool != 1) throw ShapeError("accum_fc: pooling needs [n, c, h, w] spikes, got " + to_string(s));
    w = s[1];
  } else if (s.size() == 4) {
    c = s[1], h = s[2], w = s[3];
  } else {
    throw ShapeError("accum_fc: expected [n, in] or [n, c, h, w] spikes, got " + to_string(s));
  }
  if (pool == 0) throw std::invalid_argument("accum_fc: pool factor must be positive");
  const std::size_t hp = s.size() == 2 ? 1 : h / pool, wp = s.size() == 2 ? w : w / pool;
  if (c * hp * wp != in_features) {
    throw ShapeError("accum_fc: spikes " + to_string(s) + " give " + std::to_string(c * hp * wp) +
                     " features, weight expects " + std::to_string(in_features));
  }
  auto sv = spikes.values();
  std::uint64_t adds = 0, muls = 0;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t idx = ((b * c + ci) * h + y) * w + x;
          const T v = sv[idx];
          if (v == T{0}) continue;
          if (v != T{1}) not_binary("accum_fc", v, idx);
          const std::size_t py = s.size() == 2 ? 0 : y / pool, px = s.size() == 2 ? x : x / pool;
          if (py >= hp || px >= wp) continue;
          const std::size_t f = (ci * hp + py) * wp + px;
          const T* col = wt.data() + f * out_features;
          T* dst = out.data() + b * out_features;
          std::size_t j = 0;
          if (inject) {
            dst[0] += col[0] * v;
            ++muls;
            ++adds;
            j = 1;
            inject = false;
          }
          for (; j < out_features; ++j) dst[j] += col[j];
          adds += out_features;
        }
  inject_silent(inject, wt, out, muls, adds);
  record_ops(tag, muls, adds - muls, sv.size());
}

template <typename T>
std::vector<T> transpose_kernel(const Tensor<T>& kernel, std::span<const T> out_scale) {
  const auto& s = kernel.shape();
  const std::size_t o = s[0], inner = kernel.numel() / o;
  auto kv = kernel.values();
  std::vector<T> kt(kernel.numel());
  for (std::size_t oc = 0; oc < o; ++oc)
    for (std::size_t i = 0; i < inner; ++i)
      kt[i * o + oc] = out_scale.empty() ? kv[oc * inner + i] : kv[oc * inner + i] * out_scale[oc];
  if (!out_scale.empty()) record_ops("bn_fold", kernel.numel(), 0);
  return kt;
}

}  // namespace

template <typename T>
Tensor<T> accum_conv(const Tensor<T>& spikes, const Tensor<T>& kernel, Conv2dOptions options, std::size_t pool,
                     AccumOptions fault) {
  if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("accum_conv: kernel must be [out, in, k, k], got " + to_string(kernel.shape()));
  }
  const ConvGeometry g = conv_geometry(spikes.shape(), kernel.dim(1), kernel.dim(0), kernel.dim(2), options, pool);
  const std::vector<T> kt = transpose_kernel<T>(kernel, {});
  std::vector<T> out(g.n * g.o * g.oh * g.ow, T{0});
  bool inject = fault.inject_multiply;
  scatter_conv<T>(spikes, kt, g, out, inject, "accum_conv");
  return Tensor<T>(Shape{g.n, g.o, g.oh, g.ow}, std::move(out));
}

template <typename T>
Tensor<T> accum_fc(const Tensor<T>& spikes, const Tensor<T>& weight, std::size_t pool, AccumOptions fault) {
  if (weight.rank() != 2) throw ShapeError("accum_fc: weight must be [out, in], got " + to_string(weight.shape()));
  const std::vector<T> wt = transpose_kernel<T>(weight, {});
  std::vector<T> out(spikes.dim(0) * weight.dim(0), T{0});
  bool inject = fault.inject_multiply;
  scatter_fc<T>(spikes, wt, weight.dim(1), weight.dim(0), pool, out, inject, "accum_fc");
  return Tensor<T>(Shape{spikes.dim(0), weight.dim(0)}, std::move(out));
}

template <typename T>
EquivalenceReport mt_equivalence_check(const Tensor<T>& h, T v_th, std::span<const double> deltas,
                                       const Tensor<T>& kernel, Conv2dOptions options) {
  NoGradGuard no_grad;
  std::vector<T> offsets{T{0}};
  for (double d : deltas) offsets.push_back(static_cast<T>(d));
  auto hv = h.values();
  std::vector<Tensor<T>> planes;
  std::vector<T> sum(hv.size(), T{0});
  for (T off : offsets) {
    std::vector<T> p(hv.size());
    for (std::size_t i = 0; i < hv.size(); ++i) {
      p[i] = (hv[i] - v_th) - off >= T{0} ? T{1} : T{0};
      sum[i] += p[i];
    }
    planes.emplace_back(h.shape(), std::move(p));
  }
  const Tensor<T> s_sum(h.shape(), std::move(sum));

  EquivalenceReport r;
  r.thresholds = offsets.size();
  r.tolerance = sizeof(T) >= 8 ? 1e-12 : 1e-5;
  Tensor<T> lhs;
  {
    OpCounterScope scope;
    lhs = conv2d(s_sum, kernel, options);
    r.dense = scope.counts().total();
  }
  std::vector<T> rhs(lhs.numel(), T{0});
  {
    OpCounterScope scope;
    for (const auto& p : planes) {
      Tensor<T> part = accum_conv(p, kernel, options);
      auto pv = part.values();
      for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += pv[i];
      record_ops("accum_combine", 0, rhs.size());
    }
    r.accumulated = scope.counts().total();
  }
  auto lv = lhs.values();
  for (std::size_t i = 0; i < rhs.size(); ++i) {
    r.max_abs_diff = std::max(r.max_abs_diff, std::abs(static_cast<double>(lv[i]) - static_cast<double>(rhs[i])));
  }
  r.passed = r.max_abs_diff < r.tolerance;
  return r;
}

namespace {

template <typename T>
struct Spikes {
  std::vector<Tensor<T>> planes;  // binary, one per threshold
  std::size_t pool = 1;           // pending average pool factor
};

template <typename T>
struct FoldedConv {
  std::vector<T> kt;
  std::vector<T> shift;
  std::size_t in = 0, out = 0, k = 0;
  Conv2dOptions options;
  std::size_t pool = 1;
};

template <typename T>
FoldedConv<T> fold_conv(const Conv2dLayer<T>& conv, const BatchNormLayer<T>& bn, std::size_t pool) {
  FoldedConv<T> f;
  f.out = conv.weight.dim(0);
  f.in = conv.weight.dim(1);
  f.k = conv.weight.dim(2);
  f.options = conv.options;
  f.pool = pool;
  std::vector<T> scale;
  bn.folded_affine(scale, f.shift);
  // scale = gamma / sqrt(var + eps) and shift = beta - mean * scale, per channel.
  record_ops("bn_fold", 2 * f.out, 2 * f.out);
  if (pool > 1) {
    const T inv = T{1} / static_cast<T>(pool * pool);
    for (auto& s : scale) s *= inv;
    record_ops("bn_fold", f.out + 1, 0);
  }
  f.kt = transpose_kernel<T>(conv.weight, scale);
  return f;
}

template <typename T>
struct FoldedDense {
  std::vector<T> wt;
  std::vector<T> bias;
  std::size_t in = 0, out = 0, pool = 1;
};

template <typename T>
FoldedDense<T> fold_dense(const DenseLayer<T>& d, std::size_t pool) {
  FoldedDense<T> f;
  f.out = d.weight.dim(0);
  f.in = d.weight.dim(1);
  f.pool = pool;
  f.bias.assign(d.bias.values().begin(), d.bias.values().end());
  if (pool > 1) {
    std::vector<T> scale(f.out, T{1} / static_cast<T>(pool * pool));
    record_ops("bn_fold", 1, 0);
    f.wt = transpose_kernel<T>(d.weight, scale);
  } else {
    f.wt = transpose_kernel<T>(d.weight, {});
  }
  return f;
}

/// Spiking neuron driven by an accumulated current; same arithmetic as the
/// dense step so both paths fire identically.
template <typename T>
class NeuronRuntime {
 public:
  explicit NeuronRuntime(const NeuronLayer<T>& layer) : p_(layer.params) {
    if (!is_spiking(p_.kind)) {
      throw std::invalid_argument("multiplication-free inference needs spiking neurons; this model uses relu units");
    }
    offsets_.push_back(T{0});
    for (double d : layer.deltas) offsets_.push_back(static_cast<T>(d));
  }

  Spikes<T> fire(const Tensor<T>& current) {
    auto x = current.values();
    const std::size_t n = x.size();
    const bool have_v = !v_.empty();
    if (have_v && v_.size() != n) throw ShapeError("mfree neuron: current size changed between steps");
    std::vector<T> h(n);
    OpTagScope tag("neuron");
    if (p_.kind == NeuronKind::IF) {
      for (std::size_t i = 0; i < n; ++i) h[i] = (have_v ? v_[i] : T{0}) + x[i];
      record_ops("neuron", 0, have_v ? n : 0);
    } else {
      const T a = p_.a.item();
      const T k = T{1} / (T{1} + std::exp(-a));
      const T keep = T{1} - k;
      for (std::size_t i = 0; i < n; ++i) h[i] = keep * (have_v ? v_[i] : T{0}) + k * x[i];
      record_ops("neuron", have_v ? 2 * n : n, have_v ? n : 0);
    }
    Spikes<T> out;
    for (T off : offsets_) {
      std::vector<T> plane(n);
      for (std::size_t i = 0; i < n; ++i) plane[i] = (h[i] - p_.v_th) - off >= T{0} ? T{1} : T{0};
      record_ops("neuron", 0, 2 * n, n);
      out.planes.emplace_back(current.shape(), std::move(plane));
    }
    // Reset selects 0 where the base threshold fired, H elsewhere.
    auto base = out.planes[0].values();
    v_.resize(n);
    for (std::size_t i = 0; i < n; ++i) v_[i] = base[i] != T{0} ? T{0} : h[i];
    record_ops("neuron", 0, 0, n);
    return out;
  }

 private:
  NeuronParams<T> p_;
  std::vector<T> offsets_;
  std::vector<T> v_;
};

template <typename T>
struct MFlow {
  Spikes<T> spikes;
  std::optional<Tensor<T>> current;
};

template <typename T>
class MfreeEngine {
 public:
  MfreeEngine(const Model<T>& model, AccumOptions fault) : model_(model), inject_(fault.inject_multiply) {}

  StepOutputs<T> run(const Tensor<T>& input) {
    NoGradGuard no_grad;
    const ModelConfig& cfg = model_.config();
    const std::size_t steps = cfg.steps;
    const bool frames = input.rank() == 5;
    if (!frames && input.rank() != 4) {
      throw ShapeError("mfree: expected [batch, c, h, w] or [steps, batch, c, h, w], got " + to_string(input.shape()));
    }
    if (frames && input.dim(0) != steps) {
      throw ShapeError("mfree: got " + std::to_string(input.dim(0)) + " frames for " + std::to_string(steps) + " steps");
    }
    Shape frame_shape(input.shape().begin() + (frames ? 1 : 0), input.shape().end());
    const std::size_t frame_size = numel(frame_shape);

    std::optional<Tensor<T>> static_current;
    std::vector<Tensor<T>> per_step;
    for (std::size_t t = 0; t < steps; ++t) {
      Tensor<T> enc_current;
      if (frames || !static_current) {
        Tensor<T> x_t = input;
        if (frames) {
          auto v = input.values().subspan(t * frame_size, frame_size);
          x_t = Tensor<T>(frame_shape, std::vector<T>(v.begin(), v.end()));
        }
        OpTagScope tag("encoder");
        const auto& enc = model_.encoder();
        enc_current = batch_norm_eval<T>(conv2d(x_t, enc.conv.weight, enc.conv.options), enc.bn.gamma, enc.bn.beta,
                                         enc.bn.running_mean, enc.bn.running_var, enc.bn.epsilon);
        if (!frames) static_current = enc_current;
      } else {
        enc_current = *static_current;
      }
      MFlow<T> flow{neuron("encoder", model_.encoder().neuron).fire(enc_current), enc_current};
      for (std::size_t i = 0; i < model_.body().size(); ++i) flow = block(i, std::move(flow));
      per_step.push_back(head(flow));
    }
    OpTagScope tag("readout");
    Tensor<T> all = steps == 1 ? per_step[0] : concat_rows(std::span<const Tensor<T>>(per_step));
    StepOutputs<T> out;
    out.per_step = std::move(per_step);
    out.mean = mean_over_steps(all, steps);
    return out;
  }

 private:
  NeuronRuntime<T>& neuron(const std::string& name, const NeuronLayer<T>& layer) {
    auto it = neurons_.find(name);
    if (it == neurons_.end()) it = neurons_.emplace(name, NeuronRuntime<T>(layer)).first;
    return it->second;
  }

  const FoldedConv<T>& conv(const std::string& name, const Conv2dLayer<T>& c, const BatchNormLayer<T>& bn,
                            std::size_t pool) {
    auto it = convs_.find(name);
    if (it == convs_.end()) it = convs_.emplace(name, fold_conv(c, bn, pool)).first;
    return it->second;
  }

  const FoldedDense<T>& dense(const std::string& name, const DenseLayer<T>& d, std::size_t pool) {
    auto it = denses_.find(name);
    if (it == denses_.end()) it = denses_.emplace(name, fold_dense(d, pool)).first;
    return it->second;
  }

  Tensor<T> apply(const std::string& name, const FoldedConv<T>& f, const Spikes<T>& in) {
    if (in.pool != f.pool) throw std::logic_error("mfree: pool factor changed for " + name);
    const ConvGeometry g = conv_geometry(in.planes.at(0).shape(), f.in, f.out, f.k, f.options, f.pool);
    std::vector<T> out(g.n * g.o * g.oh * g.ow, T{0});
    const std::string tag = "accum:" + name;
    for (const auto& p : in.planes) scatter_conv<T>(p, f.kt, g, out, inject_, tag);
    const std::size_t plane = g.oh * g.ow;
    for (std::size_t b = 0; b < g.n; ++b)
      for (std::size_t oc = 0; oc < g.o; ++oc) {
        T* dst = out.data() + (b * g.o + oc) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += f.shift[oc];
      }
    record_ops(tag, 0, out.size());
    return Tensor<T>(Shape{g.n, g.o, g.oh, g.ow}, std::move(out));
  }

  Tensor<T> apply(const std::string& name, const FoldedDense<T>& f, const Spikes<T>& in) {
    if (in.pool != f.pool) throw std::logic_error("mfree: pool factor changed for " + name);
    const std::size_t n = in.planes.at(0).dim(0);
    std::vector<T> out(n * f.out, T{0});
    const std::string tag = "accum:" + name;
    for (const auto& p : in.planes) scatter_fc<T>(p, f.wt, f.in, f.out, f.pool, out, inject_, tag);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t j = 0; j < f.out; ++j) out[b * f.out + j] += f.bias[j];
    record_ops(tag, 0, out.size());
    return Tensor<T>(Shape{n, f.out}, std::move(out));
  }

  MFlow<T> block(std::size_t i, MFlow<T> flow) {
    const std::string name = "body" + std::to_string(i);
    return std::visit(
        Overloaded{
            [&](const ConvBnNeuron<T>& b) {
              Tensor<T> u = apply(name, conv(name, b.conv, b.bn, flow.spikes.pool), flow.spikes);
              return MFlow<T>{neuron(name, b.neuron).fire(u), u};
            },
            [&](const PoolLayer<T>& b) {
              MFlow<T> out{std::move(flow.spikes), std::nullopt};
              if (b.kind == PoolKind::Average) {
                out.spikes.pool *= b.size;
              } else {
                if (out.spikes.pool != 1) throw std::logic_error("mfree: max pooling after a pending average pool");
                // A window maximum of every threshold's map: nested thresholds keep
                // the maps' sum equal to the maximum of the summed spikes.
                for (auto& p : out.spikes.planes) p = max_pool2d(p, b.size);
              }
              return out;
            },
            [&](const FlattenLayer&) { return MFlow<T>{std::move(flow.spikes), std::nullopt}; },
            [&](const DenseNeuron<T>& b) {
              Tensor<T> u = apply(name + ".fc", dense(name + ".fc", b.dense, flow.spikes.pool), flow.spikes);
              return MFlow<T>{neuron(name, b.neuron).fire(u), u};
            },
            [&](const ResidualBlock<T>& b) {
              const std::string first = name + ".first";
              Tensor<T> u1 = apply(first, conv(first, b.first.conv, b.first.bn, flow.spikes.pool), flow.spikes);
              Spikes<T> s1 = neuron(first, b.first.neuron).fire(u1);
              Tensor<T> main = apply(name + ".conv2", conv(name + ".conv2", b.conv2, b.bn2, 1), s1);
              Tensor<T> skip;
              if (b.projection) {
                skip = apply(name + ".skip", conv(name + ".skip", *b.projection, *b.projection_bn, flow.spikes.pool),
                             flow.spikes);
              } else {
                if (!flow.current || flow.spikes.pool != 1) {
                  throw std::logic_error("mfree: identity skip in " + name + " has no input current");
                }
                skip = *flow.current;
              }
              Tensor<T> u;
              {
                OpTagScope tag("accum:" + name + ".residual");
                u = membrane_residual_add(main, skip);
              }
              return MFlow<T>{neuron(name + ".out", b.out_neuron).fire(u), u};
            },
        },
        model_.body()[i]);
  }

  Tensor<T> head(const MFlow<T>& flow) {
    const auto& h = model_.head();
    Tensor<T> z = apply("head.fc", dense("head.fc", h.dense, flow.spikes.pool), flow.spikes);
    if (!h.neuron) return z;
    Spikes<T> s = neuron("head", *h.neuron).fire(z);
    OpTagScope tag("readout");
    std::vector<T> sum(z.numel(), T{0});
    for (const auto& p : s.planes) {
      auto pv = p.values();
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += pv[i];
    }
    record_ops("readout", 0, sum.size() * s.planes.size());
    return h.voting->forward(Tensor<T>(z.shape(), std::move(sum)));
  }

  const Model<T>& model_;
  bool inject_;
  std::map<std::string, NeuronRuntime<T>> neurons_;
  std::map<std::string, FoldedConv<T>> convs_;
  std::map<std::string, FoldedDense<T>> denses_;
};

}  // namespace

template <typename T>
MfreeResult<T> run_inference_mfree(const Model<T>& model, const Tensor<T>& input, AccumOptions fault) {
  MfreeResult<T> r;
  OpCounterScope scope;
  MfreeEngine<T> engine(model, fault);
  r.outputs = engine.run(input);
  r.counts = scope.counts();
  return r;
}

#define MTSNN_INSTANTIATE_MFREE(T)                                                                              \
  template Tensor<T> accum_conv(const Tensor<T>&, const Tensor<T>&, Conv2dOptions, std::size_t, AccumOptions); \
  template Tensor<T> accum_fc(const Tensor<T>&, const Tensor<T>&, std::size_t, AccumOptions);                  \
  template EquivalenceReport mt_equivalence_check(const Tensor<T>&, T, std::span<const double>, const Tensor<T>&, \
                                                  Conv2dOptions);                                              \
  template MfreeResult<T> run_inference_mfree(const Model<T>&, const Tensor<T>&, AccumOptions);

MTSNN_INSTANTIATE_MFREE(float)
MTSNN_INSTANTIATE_MFREE(double)

}  // namespace mtsnn
