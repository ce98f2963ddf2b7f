#pragma once

// Config-driven VGG / ResNet spiking networks unrolled over T steps.
//
// VGG: per stage, `convs` Conv-BN-neuron units with `filters` channels, then
// a 2x2 pool; the very first unit is the encoder. Hidden dense layers each
// feed a neuron, and the network ends in an output dense layer.
//
// ResNet: an encoder unit, then per stage `convs / 2` residual blocks
// (conv-BN-neuron, conv-BN, membrane-level skip, neuron). Stages after the
// first start with a stride-2 block whose skip path is a strided conv + BN.
// A global average pool feeds the single output dense layer.
//
// Output mode Membrane reads the output layer's raw pre-activation at every
// step; SpikeVoting fires it and averages groups of `voting_group` units per
// class.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mtsnn/layers.hpp"
#include "mtsnn/neuron.hpp"

namespace mtsnn {

enum class Arch { Vgg, ResNet };
enum class OutputMode { Membrane, SpikeVoting };

std::string to_string(Arch arch);
Arch parse_arch(const std::string& text);
std::string to_string(OutputMode mode);
OutputMode parse_output_mode(const std::string& text);

struct StageSpec {
  std::size_t convs = 1;
  std::size_t filters = 16;
  bool operator==(const StageSpec&) const = default;
};

struct ModelConfig {
  Arch arch = Arch::Vgg;
  std::vector<StageSpec> stages;
  std::vector<std::size_t> fc_widths;  // hidden dense layers
  std::size_t steps = 1;
  OutputMode output_mode = OutputMode::Membrane;
  NeuronKind neuron = NeuronKind::PLIF;
  double v_th = 1.0;
  double surrogate_width = 1.0;
  double init_a = 1.0;
  MTConfig mt;
  Shape input_shape{3, 32, 32};
  std::size_t class_count = 10;
  std::size_t kernel_size = 3;
  PoolKind pool = PoolKind::Average;
  std::size_t skip_kernel = 3;
  std::size_t voting_group = 10;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

namespace presets {
ModelConfig vgg8();
ModelConfig vgg9();
ModelConfig vgg12();
ModelConfig resnet20();
/// Desk-scale VGG: two single-conv stages (16, 32 filters), one hidden FC of 64.
ModelConfig tiny_vgg();
}  // namespace presets

template <typename T>
struct StepOutputs {
  std::vector<Tensor<T>> per_step;  // each [batch, classes]
  Tensor<T> mean;                   // [batch, classes]
};

/// Spikes flowing between blocks plus, where one exists, the real-valued
/// neuron input that produced them (used by identity skips).
template <typename T>
struct Flow {
  Activation<T> spikes;
  std::optional<Activation<T>> current;
};

struct FlattenLayer {};

template <typename T>
struct DenseNeuron {
  DenseLayer<T> dense;
  NeuronLayer<T> neuron;
};

template <typename T>
struct ResidualBlock {
  ConvBnNeuron<T> first;
  Conv2dLayer<T> conv2;
  BatchNormLayer<T> bn2;
  std::optional<Conv2dLayer<T>> projection;
  std::optional<BatchNormLayer<T>> projection_bn;
  NeuronLayer<T> out_neuron;

  Flow<T> forward(const Flow<T>& in, Mode mode);
};

template <typename T>
using Block = std::variant<ConvBnNeuron<T>, PoolLayer<T>, FlattenLayer, DenseNeuron<T>, ResidualBlock<T>>;

template <typename T>
struct OutputHead {
  DenseLayer<T> dense;
  std::optional<NeuronLayer<T>> neuron;  // SpikeVoting only
  std::optional<VotingLayer<T>> voting;
};

/// Flat, order-stable snapshot of a model's parameters and buffers. Values
/// are widened to double so float models round-trip exactly.
struct StateEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};
using StateDict = std::vector<StateEntry>;

template <typename T>
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  /// `input` is a static batch [batch, c, h, w] shown at every step, or a
  /// frame sequence [steps, batch, c, h, w]. Neuron states start from zero on
  /// every call.
  StepOutputs<T> forward(const Tensor<T>& input, Mode mode);

  /// Trainable tensors. Handles alias the model's storage.
  std::vector<NamedTensor<T>> parameters() const;
  std::size_t parameter_count() const;

  StateDict state() const;
  /// Loads a state produced by any Model with the same config. Throws on a
  /// missing entry or shape mismatch.
  void load_state(const StateDict& state);

  void set_spike_forward(SpikeForward mode);

  const ModelConfig& config() const { return config_; }
  const ConvBnNeuron<T>& encoder() const { return parts_.encoder; }
  const std::vector<Block<T>>& body() const { return parts_.body; }
  const OutputHead<T>& head() const { return parts_.head; }

 private:
  struct Parts {
    ConvBnNeuron<T> encoder;
    std::vector<Block<T>> body;
    OutputHead<T> head;
  };
  static Parts build(const ModelConfig& config, std::uint64_t seed);

  /// Calls on_param(name, Tensor&) for parameters and on_buffer(name,
  /// std::vector<T>&) for batch-norm running statistics, in a fixed order.
  template <typename OnParam, typename OnBuffer>
  void visit(OnParam&& on_param, OnBuffer&& on_buffer);

  ModelConfig config_;
  Parts parts_;
};

/// Same weights at another precision.
template <typename To, typename From>
Model<To> convert_model(const Model<From>& model) {
  Model<To> out(model.config(), 0);
  out.load_state(model.state());
  return out;
}

}  // namespace mtsnn
