#pragma once

// Experiment plumbing shared by the C API and the command line: dataset
// selection, run directories, verification reports, ablation grids and
// charts.
//
// A run directory is <out>/<name>-<YYYYmmdd-HHMMSS>[-n]/ holding config.ini
// (the resolved snapshot), metrics.csv, checkpoints/ and, after verify,
// verify.json.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mtsnn/config.hpp"
#include "mtsnn/data.hpp"
#include "mtsnn/model.hpp"
#include "mtsnn/train.hpp"

namespace mtsnn {

/// Train and test splits for the config's [data] section.
CifarSplits load_datasets(const RunConfig& config, const std::filesystem::path& data_root);

std::filesystem::path make_run_dir(const std::filesystem::path& out_root, const std::string& name);

struct TrainRun {
  std::filesystem::path run_dir;
  RunMetrics metrics;
};

/// Builds the model, trains it and writes a run directory. An empty
/// `data_root` falls back to data.root, then $MTSNN_DATA.
TrainRun train_run(const RunConfig& config, const std::filesystem::path& data_root,
                   const std::filesystem::path& out_root, const std::filesystem::path& resume_from = {},
                   const std::function<void(const EpochRecord&)>& on_record = {});

struct VerifyOptions {
  std::size_t images = 10;
  int precision_bits = 64;  // 32 or 64
  bool inject_multiply = false;
  std::size_t draws_per_layer = 20;
  double logit_tolerance = 1e-4;
  std::uint64_t seed = 0;
};

struct VerifyOutcome {
  bool passed = false;
  std::string json;
};

/// Runs the dense and multiplication-free paths on the first `images`
/// samples, checks per-logit agreement, argmax agreement, zero
/// multiplications in accumulation kernels, and the per-threshold identity
/// for every spike-input convolution.
VerifyOutcome verify_model(const Model<float>& model, const Dataset& data, const VerifyOptions& options);

enum class AblationAxis { MtScope, Deltas, Steps };
AblationAxis parse_ablation_axis(const std::string& text);
std::string to_string(AblationAxis axis);

struct AblationRow {
  std::string setting;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  double peak_test_accuracy = 0;
  double final_test_accuracy = 0;
  std::filesystem::path run_dir;
};

struct AblationSpec {
  AblationAxis axis = AblationAxis::Deltas;
  /// Settings along the axis. Deltas use ',' inside one setting; "none" or
  /// "[]" is the single-threshold network.
  std::vector<std::string> values;
  /// Step counts to cross with the axis (ignored for the steps axis); empty
  /// keeps the config's value.
  std::vector<std::size_t> steps;
  /// Seeds per cell; empty keeps the config's seed.
  std::vector<std::uint64_t> seeds;
};

/// Expands the grid without running it; throws ConfigError when it is empty.
std::vector<std::pair<std::string, RunConfig>> ablation_grid(const RunConfig& base, const AblationSpec& spec);

std::vector<AblationRow> run_ablation(const RunConfig& base, const AblationSpec& spec,
                                      const std::filesystem::path& data_root, const std::filesystem::path& out_root,
                                      const std::function<void(const std::string&)>& log = {});

std::string ablation_csv(AblationAxis axis, const std::vector<AblationRow>& rows);

/// Writes accuracy_vs_epoch.svg and, when the runs cover two or more step
/// counts, accuracy_vs_steps.svg into out_dir. Returns the files written.
std::vector<std::filesystem::path> plot_runs(const std::vector<std::filesystem::path>& run_dirs,
                                             const std::filesystem::path& out_dir);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mtsnn
