#include "mtsnn/model.hpp"

#include <stdexcept>

namespace mtsnn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument("model config: " + message);
}

}  // namespace

std::string to_string(Arch arch) { return arch == Arch::Vgg ? "vgg" : "resnet"; }

Arch parse_arch(const std::string& text) {
  if (text == "vgg") return Arch::Vgg;
  if (text == "resnet") return Arch::ResNet;
  throw std::invalid_argument("unknown arch '" + text + "' (expected vgg or resnet)");
}

std::string to_string(OutputMode mode) { return mode == OutputMode::Membrane ? "membrane" : "spike_voting"; }

OutputMode parse_output_mode(const std::string& text) {
  if (text == "membrane") return OutputMode::Membrane;
  if (text == "spike_voting") return OutputMode::SpikeVoting;
  throw std::invalid_argument("unknown output mode '" + text + "' (expected membrane or spike_voting)");
}

void ModelConfig::validate() const {
  require(steps >= 1, "steps must be at least 1");
  require(!stages.empty(), "at least one stage is required");
  for (const auto& s : stages) require(s.convs >= 1 && s.filters >= 1, "stage conv counts and filters must be positive");
  require(input_shape.size() == 3 && numel(input_shape) > 0, "input_shape must be channels,height,width");
  require(class_count >= 1, "class_count must be positive");
  require(kernel_size % 2 == 1, "kernel_size must be odd");
  require(skip_kernel % 2 == 1, "skip_kernel must be odd");
  require(voting_group >= 1, "voting_group must be positive");
  require(v_th > 0, "v_th must be positive");
  require(surrogate_width > 0, "surrogate_width must be positive");
  require(bn_epsilon > 0, "bn_epsilon must be positive");
  require(!(output_mode == OutputMode::SpikeVoting && !is_spiking(neuron)), "spike_voting output needs a spiking neuron");
  mt.validate(v_th);
  std::size_t h = input_shape[1], w = input_shape[2];
  if (arch == Arch::Vgg) {
    require(!fc_widths.empty(), "vgg needs at least one hidden fc layer");
    for (auto width : fc_widths) require(width >= 1, "fc widths must be positive");
    for (std::size_t s = 0; s < stages.size(); ++s) {
      h /= 2;
      w /= 2;
      require(h >= 1 && w >= 1, "input is too small for " + std::to_string(stages.size()) + " pooling stages");
    }
  } else {
    require(fc_widths.empty(), "resnet has exactly one (output) fc layer; fc_widths must be empty");
    for (const auto& s : stages) require(s.convs % 2 == 0, "resnet stage conv counts must be even (two per block)");
    require(h == w, "resnet needs a square input for the global pool");
  }
}

namespace presets {

ModelConfig vgg8() {
  ModelConfig c;
  c.arch = Arch::Vgg;
  c.stages = {{3, 256}, {3, 256}};
  c.fc_widths = {2048};
  return c;
}

ModelConfig vgg9() {
  ModelConfig c;
  c.arch = Arch::Vgg;
  c.stages = {{2, 256}, {2, 512}, {3, 512}};
  c.fc_widths = {1024};
  return c;
}

ModelConfig vgg12() {
  ModelConfig c;
  c.arch = Arch::Vgg;
  c.stages = {{2, 128}, {2, 128}, {3, 128}, {3, 128}, {3, 128}};
  c.fc_widths = {512};
  c.input_shape = {2, 128, 128};
  return c;
}

ModelConfig resnet20() {
  ModelConfig c;
  c.arch = Arch::ResNet;
  c.stages = {{6, 64}, {6, 128}, {6, 256}};
  return c;
}

ModelConfig tiny_vgg() {
  ModelConfig c;
  c.arch = Arch::Vgg;
  c.stages = {{1, 16}, {1, 32}};
  c.fc_widths = {64};
  return c;
}

}  // namespace presets

template <typename T>
Flow<T> ResidualBlock<T>::forward(const Flow<T>& in, Mode mode) {
  Activation<T> inner = first.forward(in.spikes, mode);
  Activation<T> main = bn2.forward(conv2.forward(inner), mode);
  Activation<T> skip;
  if (projection) {
    skip = projection_bn->forward(projection->forward(in.spikes), mode);
  } else {
    if (!in.current) throw std::logic_error("residual block: identity skip needs the block input current");
    skip = *in.current;
  }
  if (main.repeated != skip.repeated) {
    main = main.materialize();
    skip = skip.materialize();
  }
  Activation<T> u{membrane_residual_add(main.data, skip.data), main.steps, main.repeated};
  return Flow<T>{out_neuron.forward(u), u};
}

template <typename T>
typename Model<T>::Parts Model<T>::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t k = config.kernel_size;
  auto neuron = [&](bool use_mt) {
    NeuronParams<T> p;
    p.kind = config.neuron;
    p.v_th = static_cast<T>(config.v_th);
    p.surrogate_width = static_cast<T>(config.surrogate_width);
    p.a = Tensor<T>::scalar(static_cast<T>(config.init_a), config.neuron == NeuronKind::PLIF);
    return NeuronLayer<T>(p, use_mt ? config.mt.deltas : std::vector<double>{});
  };
  auto bn = [&](std::size_t channels) {
    return BatchNormLayer<T>(channels, static_cast<T>(config.bn_momentum), static_cast<T>(config.bn_epsilon));
  };
  auto unit = [&](std::size_t in, std::size_t out, std::size_t stride, bool use_mt) {
    return ConvBnNeuron<T>(Conv2dLayer<T>(in, out, k, Conv2dOptions{stride, Padding::Same}, rng), bn(out),
                           neuron(use_mt));
  };

  const bool fc_mt = config.mt.scope == MtScope::ConvAndFc;
  std::size_t channels = config.stages[0].filters;
  std::size_t h = config.input_shape[1], w = config.input_shape[2];
  ConvBnNeuron<T> encoder = unit(config.input_shape[0], channels, 1, config.mt.apply_to_encoder);
  std::vector<Block<T>> body;

  std::size_t features = 0;
  if (config.arch == Arch::Vgg) {
    for (std::size_t s = 0; s < config.stages.size(); ++s) {
      const auto& stage = config.stages[s];
      for (std::size_t i = (s == 0 ? 1 : 0); i < stage.convs; ++i) {
        body.emplace_back(unit(channels, stage.filters, 1, true));
        channels = stage.filters;
      }
      body.emplace_back(PoolLayer<T>{config.pool, 2});
      h /= 2;
      w /= 2;
    }
    body.emplace_back(FlattenLayer{});
    features = channels * h * w;
    for (auto width : config.fc_widths) {
      body.emplace_back(DenseNeuron<T>{DenseLayer<T>(features, width, rng), neuron(fc_mt)});
      features = width;
    }
  } else {
    for (std::size_t s = 0; s < config.stages.size(); ++s) {
      const auto& stage = config.stages[s];
      for (std::size_t b = 0; b < stage.convs / 2; ++b) {
        const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
        const std::size_t out = stage.filters;
        ResidualBlock<T> block{unit(channels, out, stride, true),
                               Conv2dLayer<T>(out, out, k, Conv2dOptions{1, Padding::Same}, rng),
                               bn(out),
                               std::nullopt,
                               std::nullopt,
                               neuron(true)};
        if (stride != 1 || channels != out) {
          block.projection.emplace(channels, out, config.skip_kernel, Conv2dOptions{stride, Padding::Same}, rng);
          block.projection_bn.emplace(bn(out));
        }
        body.emplace_back(std::move(block));
        channels = out;
        h = conv_output_size(h, k, stride, Padding::Same);
        w = conv_output_size(w, k, stride, Padding::Same);
      }
    }
    body.emplace_back(PoolLayer<T>{PoolKind::Average, h});
    body.emplace_back(FlattenLayer{});
    features = channels;
  }

  const bool voting = config.output_mode == OutputMode::SpikeVoting;
  const std::size_t out_width = voting ? config.voting_group * config.class_count : config.class_count;
  OutputHead<T> head{DenseLayer<T>(features, out_width, rng), std::nullopt, std::nullopt};
  if (voting) {
    head.neuron.emplace(neuron(fc_mt));
    head.voting.emplace(VotingLayer<T>{config.voting_group});
  }
  return Parts{std::move(encoder), std::move(body), std::move(head)};
}

template <typename T>
Model<T>::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)), parts_(build(config_, seed)) {}

template <typename T>
StepOutputs<T> Model<T>::forward(const Tensor<T>& input, Mode mode) {
  const std::size_t steps = config_.steps;
  Activation<T> x;
  if (input.rank() == 4) {
    if (Shape(input.shape().begin() + 1, input.shape().end()) != config_.input_shape) {
      throw ShapeError("model: input " + to_string(input.shape()) + " does not match configured input_shape " +
                       to_string(config_.input_shape));
    }
    x = Activation<T>{input, steps, true};
  } else if (input.rank() == 5) {
    if (input.dim(0) != steps) {
      throw ShapeError("model: got " + std::to_string(input.dim(0)) + " frames for " + std::to_string(steps) + " steps");
    }
    Shape flat(input.shape().begin() + 1, input.shape().end());
    if (Shape(flat.begin() + 1, flat.end()) != config_.input_shape) {
      throw ShapeError("model: frames " + to_string(input.shape()) + " do not match configured input_shape " +
                       to_string(config_.input_shape));
    }
    flat[0] *= steps;
    x = Activation<T>{reshape(input, flat), steps, false};
  } else {
    throw ShapeError("model: expected [batch, c, h, w] or [steps, batch, c, h, w], got " + to_string(input.shape()));
  }

  Flow<T> flow;
  Activation<T> current;
  flow.spikes = parts_.encoder.forward(x, mode, &current);
  flow.current = current;
  for (auto& block : parts_.body) {
    std::visit(Overloaded{
                   [&](ConvBnNeuron<T>& b) {
                     Activation<T> cur;
                     flow.spikes = b.forward(flow.spikes, mode, &cur);
                     flow.current = cur;
                   },
                   [&](PoolLayer<T>& b) {
                     flow.spikes = b.forward(flow.spikes);
                     flow.current.reset();
                   },
                   [&](FlattenLayer&) {
                     flow.spikes = flow.spikes.map([](const Tensor<T>& d) {
                       return reshape(d, Shape{d.dim(0), d.numel() / d.dim(0)});
                     });
                     flow.current.reset();
                   },
                   [&](DenseNeuron<T>& b) {
                     Activation<T> u = b.dense.forward(flow.spikes);
                     flow.spikes = b.neuron.forward(u);
                     flow.current = u;
                   },
                   [&](ResidualBlock<T>& b) { flow = b.forward(flow, mode); },
               },
               block);
  }

  Tensor<T> out = parts_.head.dense.forward(flow.spikes).materialize().data;
  if (parts_.head.neuron) {
    Activation<T> fired = parts_.head.neuron->forward(Activation<T>{out, steps, false});
    out = parts_.head.voting->forward(fired.data);
  }
  StepOutputs<T> result;
  const std::size_t batch = out.dim(0) / steps;
  for (std::size_t t = 0; t < steps; ++t) result.per_step.push_back(slice_rows(out, t * batch, batch));
  result.mean = mean_over_steps(out, steps);
  return result;
}

template <typename T>
template <typename OnParam, typename OnBuffer>
void Model<T>::visit(OnParam&& on_param, OnBuffer&& on_buffer) {
  auto conv = [&](const std::string& p, Conv2dLayer<T>& c) { on_param(p + ".weight", c.weight); };
  auto norm = [&](const std::string& p, BatchNormLayer<T>& b) {
    on_param(p + ".gamma", b.gamma);
    on_param(p + ".beta", b.beta);
    on_buffer(p + ".running_mean", b.running_mean);
    on_buffer(p + ".running_var", b.running_var);
  };
  auto neuron = [&](const std::string& p, NeuronLayer<T>& n) {
    if (n.params.kind == NeuronKind::PLIF) on_param(p + ".a", n.params.a);
  };
  auto dense = [&](const std::string& p, DenseLayer<T>& d) {
    on_param(p + ".weight", d.weight);
    on_param(p + ".bias", d.bias);
  };
  auto unit = [&](const std::string& p, ConvBnNeuron<T>& u) {
    conv(p + ".conv", u.conv);
    norm(p + ".bn", u.bn);
    neuron(p + ".neuron", u.neuron);
  };

  unit("encoder", parts_.encoder);
  for (std::size_t i = 0; i < parts_.body.size(); ++i) {
    const std::string p = "body" + std::to_string(i);
    std::visit(Overloaded{
                   [&](ConvBnNeuron<T>& b) { unit(p, b); },
                   [&](PoolLayer<T>&) {},
                   [&](FlattenLayer&) {},
                   [&](DenseNeuron<T>& b) {
                     dense(p + ".fc", b.dense);
                     neuron(p + ".neuron", b.neuron);
                   },
                   [&](ResidualBlock<T>& b) {
                     unit(p + ".first", b.first);
                     conv(p + ".conv2", b.conv2);
                     norm(p + ".bn2", b.bn2);
                     if (b.projection) {
                       conv(p + ".skip.conv", *b.projection);
                       norm(p + ".skip.bn", *b.projection_bn);
                     }
                     neuron(p + ".out_neuron", b.out_neuron);
                   },
               },
               parts_.body[i]);
  }
  dense("head.fc", parts_.head.dense);
  if (parts_.head.neuron) neuron("head.neuron", *parts_.head.neuron);
}

template <typename T>
std::vector<NamedTensor<T>> Model<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  const_cast<Model*>(this)->visit([&](const std::string& name, Tensor<T>& t) { out.push_back({name, t}); },
                                  [](const std::string&, std::vector<T>&) {});
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

template <typename T>
StateDict Model<T>::state() const {
  StateDict out;
  const_cast<Model*>(this)->visit(
      [&](const std::string& name, Tensor<T>& t) {
        out.push_back({name, t.shape(), std::vector<double>(t.values().begin(), t.values().end())});
      },
      [&](const std::string& name, std::vector<T>& b) {
        out.push_back({name, Shape{b.size()}, std::vector<double>(b.begin(), b.end())});
      });
  return out;
}

template <typename T>
void Model<T>::load_state(const StateDict& state) {
  std::size_t index = 0;
  auto next = [&](const std::string& name, const Shape& shape) -> const StateEntry& {
    if (index >= state.size() || state[index].name != name) {
      throw std::invalid_argument("model state: expected entry '" + name + "'" +
                                  (index < state.size() ? ", found '" + state[index].name + "'" : ", state ended"));
    }
    const StateEntry& e = state[index++];
    if (e.shape != shape || e.values.size() != numel(shape)) {
      throw ShapeError("model state: entry '" + name + "' has shape " + to_string(e.shape) + ", model expects " +
                       to_string(shape));
    }
    return e;
  };
  visit(
      [&](const std::string& name, Tensor<T>& t) {
        const StateEntry& e = next(name, t.shape());
        auto dst = t.mutable_values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e.values[i]);
      },
      [&](const std::string& name, std::vector<T>& b) {
        const StateEntry& e = next(name, Shape{b.size()});
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = static_cast<T>(e.values[i]);
      });
  if (index != state.size()) {
    throw std::invalid_argument("model state: unexpected extra entry '" + state[index].name + "'");
  }
}

template <typename T>
void Model<T>::set_spike_forward(SpikeForward mode) {
  auto set = [mode](NeuronLayer<T>& n) { n.params.spike_forward = mode; };
  set(parts_.encoder.neuron);
  for (auto& block : parts_.body) {
    std::visit(Overloaded{
                   [&](ConvBnNeuron<T>& b) { set(b.neuron); },
                   [&](DenseNeuron<T>& b) { set(b.neuron); },
                   [&](ResidualBlock<T>& b) {
                     set(b.first.neuron);
                     set(b.out_neuron);
                   },
                   [](auto&) {},
               },
               block);
  }
  if (parts_.head.neuron) set(*parts_.head.neuron);
}

template class Model<float>;
template class Model<double>;
template struct ResidualBlock<float>;
template struct ResidualBlock<double>;

}  // namespace mtsnn
