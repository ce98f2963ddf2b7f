// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtsnn/mtsnn.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Failure {
  int code;
};

int exit_code(mtsnn_status s) {
  switch (s) {
    case MTSNN_OK: return kExitOk;
    case MTSNN_ERR_USAGE:
    case MTSNN_ERR_INVALID_ARGUMENT: return kExitUsage;
    default: return kExitRuntime;
  }
}

void check(mtsnn_status s) {
  if (s == MTSNN_OK) return;
  std::cerr << "error: " << mtsnn_last_error() << "\n";
  throw Failure{exit_code(s)};
}

void usage_error(const std::string& message) {
  std::cerr << "error: " << message << "\n";
  throw Failure{kExitUsage};
}

using ConfigPtr = std::unique_ptr<mtsnn_config, decltype(&mtsnn_config_free)>;
using ModelPtr = std::unique_ptr<mtsnn_model, decltype(&mtsnn_model_free)>;
using OwnedString = std::unique_ptr<char, decltype(&mtsnn_string_free)>;

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f, bool with_steps) {
  cmd->add_option("--config", f.config_path, "Run configuration file (INI)");
  cmd->add_option("--set", f.sets, "Override a key, e.g. --set mt.deltas=-0.3,0.3 (repeatable)");
  cmd->add_option("--seed", f.seed, "Training seed");
  if (with_steps) cmd->add_option("--steps", f.steps, "Number of time steps");
}

ConfigPtr load_config(const ConfigFlags& f) {
  mtsnn_config* raw = nullptr;
  if (f.config_path.empty()) {
    check(mtsnn_config_from_string("", &raw));
  } else {
    check(mtsnn_config_load(f.config_path.c_str(), &raw));
  }
  ConfigPtr cfg(raw, &mtsnn_config_free);
  for (const std::string& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) usage_error("--set expects key=value, got '" + s + "'");
    check(mtsnn_config_set(cfg.get(), s.substr(0, eq).c_str(), s.substr(eq + 1).c_str()));
  }
  if (f.seed) check(mtsnn_config_set(cfg.get(), "train.seed", std::to_string(*f.seed).c_str()));
  if (f.steps) check(mtsnn_config_set(cfg.get(), "model.steps", std::to_string(*f.steps).c_str()));
  return cfg;
}

const char* c_str_or_null(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

void print_epoch(const mtsnn_epoch_record* r, void*) {
  std::fprintf(stderr, "epoch %3zu %-5s loss %.4f acc %.4f lr %.4g (%.1fs)\n", r->epoch, r->split, r->loss,
               r->accuracy, r->lr, r->seconds);
}

void print_log(const char* line, void*) { std::cerr << line << "\n"; }

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) {
    std::cerr << "error: cannot write " << path << "\n";
    throw Failure{kExitRuntime};
  }
}

fs::path default_report_path(const fs::path& checkpoint) {
  const fs::path dir = checkpoint.parent_path();
  if (dir.filename() == "checkpoints") return dir.parent_path() / "verify.json";
  return dir / "verify.json";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-threshold spiking network trainer and verifier"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mtsnn_version()));

  std::string data_root;
  std::string out_root = "runs";

  ConfigFlags train_flags;
  std::string resume;
  auto* train = app.add_subcommand("train", "Train a model and write a run directory");
  add_config_flags(train, train_flags, true);
  train->add_option("--data-root", data_root, "Dataset root (default: $MTSNN_DATA)");
  train->add_option("--out", out_root, "Parent directory for run directories");
  train->add_option("--resume", resume, "Checkpoint to continue from");

  std::string checkpoint;
  std::string split = "test";
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evaluate->add_option("--data-root", data_root, "Dataset root (default: $MTSNN_DATA)");
  evaluate->add_option("--split", split, "train or test");

  ConfigFlags ablate_flags;
  std::string axis;
  std::string values;
  std::string step_list;
  std::string seed_list;
  std::string csv_path;
  auto* ablate = app.add_subcommand("ablate", "Train a grid of configurations along one axis");
  add_config_flags(ablate, ablate_flags, false);
  ablate->add_option("--axis", axis, "mt_scope, deltas or steps")->required();
  ablate->add_option("--values", values, "Settings separated by ';', e.g. \"none;-0.3;0.3;-0.3,0.3\"")->required();
  ablate->add_option("--steps", step_list, "Comma-separated step counts to cross with the axis");
  ablate->add_option("--seeds", seed_list, "Comma-separated seeds per cell");
  ablate->add_option("--data-root", data_root, "Dataset root (default: $MTSNN_DATA)");
  ablate->add_option("--out", out_root, "Parent directory for run directories");
  ablate->add_option("--csv", csv_path, "Summary CSV path (default: <out>/ablation-<axis>.csv)");

  std::size_t images = 10;
  int precision = 64;
  bool inject = false;
  std::string report_path;
  std::uint64_t verify_seed = 0;
  auto* verify = app.add_subcommand("verify", "Check the multiplication-free path against the dense one");
  verify->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  verify->add_option("--data-root", data_root, "Dataset root (default: $MTSNN_DATA)");
  verify->add_option("--images", images, "Test images to run");
  verify->add_option("--precision", precision, "32 or 64");
  verify->add_flag("--inject-multiply", inject, "Fault-inject one multiply into an accumulation kernel");
  verify->add_option("--out", report_path, "Report path (default: <run dir>/verify.json)");
  verify->add_option("--seed", verify_seed, "Seed for the per-layer equivalence draws");

  std::vector<std::string> run_dirs;
  std::string plot_out = "plots";
  auto* plot = app.add_subcommand("plot", "Render accuracy charts from run directories");
  plot->add_option("runs", run_dirs, "Run directories");
  plot->add_option("--out", plot_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) {
      ConfigPtr cfg = load_config(train_flags);
      mtsnn_train_options opts{c_str_or_null(data_root), out_root.c_str(), c_str_or_null(resume), &print_epoch,
                               nullptr};
      mtsnn_train_result result{};
      check(mtsnn_train(cfg.get(), &opts, &result));
      std::printf("run_dir %s\npeak_test_accuracy %.4f (epoch %zu)\nfinal_test_accuracy %.4f\n", result.run_dir,
                  result.peak_test_accuracy, result.peak_epoch, result.final_test_accuracy);
    } else if (*evaluate) {
      mtsnn_model* raw = nullptr;
      check(mtsnn_model_load(checkpoint.c_str(), &raw));
      ModelPtr model(raw, &mtsnn_model_free);
      mtsnn_evaluation e{};
      check(mtsnn_evaluate(model.get(), c_str_or_null(data_root), split.c_str(), &e));
      std::printf("split %s\nsamples %zu\nloss %.6f\naccuracy %.4f\n", split.c_str(), e.samples, e.loss, e.accuracy);
    } else if (*ablate) {
      ConfigPtr cfg = load_config(ablate_flags);
      mtsnn_ablate_options opts{axis.c_str(),           values.c_str(),   c_str_or_null(step_list),
                                c_str_or_null(seed_list), c_str_or_null(data_root), out_root.c_str(),
                                &print_log,             nullptr};
      char* raw = nullptr;
      check(mtsnn_ablate(cfg.get(), &opts, &raw));
      OwnedString csv(raw, &mtsnn_string_free);
      const fs::path path = csv_path.empty() ? fs::path(out_root) / ("ablation-" + axis + ".csv") : fs::path(csv_path);
      write_file(path, csv.get());
      std::cout << csv.get();
      std::cerr << "wrote " << path.string() << "\n";
    } else if (*verify) {
      mtsnn_model* raw = nullptr;
      check(mtsnn_model_load(checkpoint.c_str(), &raw));
      ModelPtr model(raw, &mtsnn_model_free);
      mtsnn_verify_options opts{c_str_or_null(data_root), images, precision, inject ? 1 : 0, verify_seed};
      char* json = nullptr;
      int passed = 0;
      const mtsnn_status s = mtsnn_verify(model.get(), &opts, &json, &passed);
      if (s != MTSNN_OK && s != MTSNN_ERR_VERIFY_FAILED) check(s);
      OwnedString report(json, &mtsnn_string_free);
      const fs::path path = report_path.empty() ? default_report_path(checkpoint) : fs::path(report_path);
      write_file(path, report.get());
      std::cout << report.get();
      std::cerr << "verify " << (passed ? "PASS" : "FAIL") << " (report " << path.string() << ")\n";
      return passed ? kExitOk : kExitRuntime;
    } else if (*plot) {
      std::vector<const char*> dirs;
      for (const auto& d : run_dirs) dirs.push_back(d.c_str());
      char* raw = nullptr;
      check(mtsnn_plot(dirs.data(), dirs.size(), plot_out.c_str(), &raw));
      OwnedString written(raw, &mtsnn_string_free);
      std::cout << written.get();
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return kExitOk;
}
