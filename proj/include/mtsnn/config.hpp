#pragma once

// Run configuration: INI-style text with [run], [model], [mt], [train] and
// [data] sections. Every key has a default; an unknown section or key is an
// error. `model.preset` seeds the model fields before the remaining model
// keys are applied, so a file may name a preset and then adjust it.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mtsnn/model.hpp"

namespace mtsnn {

/// Malformed or unknown configuration; the CLI reports these as usage errors.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class LossKind { SoftmaxCe, Mse };
enum class EventSlicing { Count, Time };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);
std::string to_string(EventSlicing slicing);
EventSlicing parse_event_slicing(const std::string& text);

struct Milestone {
  std::size_t epoch = 0;
  double multiplier = 1.0;
  bool operator==(const Milestone&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  std::vector<Milestone> milestones{{100, 0.1}};
  LossKind loss = LossKind::SoftmaxCe;
  std::uint64_t seed = 0;
  bool augment = true;
  std::size_t checkpoint_every = 1;  // epochs; 0 keeps only the final checkpoint
};

struct DataConfig {
  std::string dataset = "cifar10";  // cifar10 | synth | events
  std::string root;                 // empty: MTSNN_DATA
  std::size_t train_limit = 0;      // 0: all
  std::size_t test_limit = 0;
  std::size_t synth_train = 512;
  std::size_t synth_test = 128;
  EventSlicing event_slicing = EventSlicing::Count;
};

struct RunConfig {
  std::string name = "run";
  ModelConfig model = presets::tiny_vgg();
  TrainConfig train;
  DataConfig data;
};

/// Parses config text. Throws ConfigError naming the offending key.
RunConfig parse_run_config(const std::string& text);

/// Key/value pairs ("section.key", value) in file order, before resolution.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;
ConfigEntries read_config_entries(const std::string& text);

/// Applies entries on top of defaults, presets first.
RunConfig resolve_config(const ConfigEntries& entries);

/// Full snapshot with every key spelled out; parsing it yields the same config.
std::string to_config_text(const RunConfig& config);

/// Adds or replaces one dotted key, e.g. ("mt.deltas", "-0.3,0.3").
void set_entry(ConfigEntries& entries, const std::string& key, const std::string& value);

/// Names of all recognised keys, "section.key".
std::vector<std::string> known_config_keys();

ModelConfig preset_by_name(const std::string& name);

}  // namespace mtsnn
