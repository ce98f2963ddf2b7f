#pragma once

// Training: SGD with classical momentum, step learning-rate decay, losses on
// the mean output over time steps, per-epoch metrics and resumable
// checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mtsnn/checkpoint.hpp"
#include "mtsnn/config.hpp"
#include "mtsnn/data.hpp"
#include "mtsnn/model.hpp"

namespace mtsnn {

/// Non-finite loss; the message carries epoch, batch and learning rate.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct SgdState {
  T momentum{0.9};
  std::vector<std::vector<T>> velocity;  // one per parameter, zero-initialised
};

template <typename T>
SgdState<T> make_sgd_state(std::span<const NamedTensor<T>> params, T momentum);

/// v = momentum * v + g; p = p - lr * v. Throws naming any parameter that has
/// no gradient.
template <typename T>
void sgd_step(std::span<NamedTensor<T>> params, const Gradients<T>& grads, SgdState<T>& state, T lr);

/// Base rate times the multiplier of every milestone at or before `epoch`.
double lr_at(double base_lr, std::span<const Milestone> milestones, std::size_t epoch);

/// Softmax cross-entropy or MSE against one-hot targets, on outputs.mean.
template <typename T>
Tensor<T> classification_loss(const StepOutputs<T>& outputs, std::span<const int> labels, LossKind kind);

template <typename T>
std::size_t count_correct(const Tensor<T>& scores, std::span<const int> labels);

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;  // train | test
  double loss = 0;
  double accuracy = 0;
  double lr = 0;
  double seconds = 0;
};

struct RunMetrics {
  std::vector<EpochRecord> rows;
  double peak_test_accuracy = 0;
  double final_test_accuracy = 0;
  std::size_t peak_epoch = 0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kMetricsHeader = "epoch,split,loss,accuracy,lr,seconds";
std::string metrics_to_csv(std::span<const EpochRecord> rows);
std::vector<EpochRecord> metrics_from_csv(const std::string& text);
RunMetrics summarize(std::vector<EpochRecord> rows, std::uint64_t seed);

struct Evaluation {
  double loss = 0;
  double accuracy = 0;
};

template <typename T>
Evaluation evaluate(Model<T>& model, const Dataset& data, std::size_t batch_size, LossKind loss);

struct FitOptions {
  TrainConfig train;
  /// When set, metrics.csv and checkpoints/ are written here.
  std::filesystem::path out_dir;
  /// Checkpoint to continue from; its model, optimizer, rng and metrics
  /// replace the fresh state.
  std::filesystem::path resume_from;
  /// Resolved config text stored in every checkpoint.
  std::string config_text;
  std::function<void(const EpochRecord&)> on_record;
};

RunMetrics fit(Model<float>& model, const Dataset& train, const Dataset& test, const FitOptions& options);

/// Model weights plus the config text they were trained with.
Checkpoint model_checkpoint(const Model<float>& model, const std::string& config_text);

struct LoadedModel {
  RunConfig config;
  Model<float> model;
};

/// Rebuilds a model from any checkpoint written by fit() or model_checkpoint().
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace mtsnn
