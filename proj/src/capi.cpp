#include "mtsnn/mtsnn.h"

#include <charconv>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mtsnn/checkpoint.hpp"
#include "mtsnn/experiment.hpp"

struct mtsnn_config {
  mtsnn::ConfigEntries entries;
  mtsnn::RunConfig resolved;
};

struct mtsnn_model {
  mtsnn::LoadedModel loaded;
};

namespace {

namespace fs = std::filesystem;

thread_local std::string last_error;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename F>
mtsnn_status guarded(F&& body) {
  try {
    last_error.clear();
    return body();
  } catch (const ArgumentError& e) {
    last_error = e.what();
    return MTSNN_ERR_INVALID_ARGUMENT;
  } catch (const mtsnn::ConfigError& e) {
    last_error = e.what();
    return MTSNN_ERR_USAGE;
  } catch (const mtsnn::CheckpointError& e) {
    last_error = e.what();
    return MTSNN_ERR_USAGE;
  } catch (const mtsnn::DataError& e) {
    last_error = e.what();
    return MTSNN_ERR_DATA;
  } catch (const IoError& e) {
    last_error = e.what();
    return MTSNN_ERR_IO;
  } catch (const fs::filesystem_error& e) {
    last_error = e.what();
    return MTSNN_ERR_IO;
  } catch (const std::invalid_argument& e) {
    last_error = e.what();
    return MTSNN_ERR_USAGE;
  } catch (const std::exception& e) {
    last_error = e.what();
    return MTSNN_ERR_RUNTIME;
  } catch (...) {
    last_error = "unknown error";
    return MTSNN_ERR_RUNTIME;
  }
}

template <typename P>
P* require(P* p, const char* what) {
  if (p == nullptr) throw ArgumentError(std::string(what) + " is null");
  return p;
}

char* copy_out(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

fs::path path_or(const char* value, const char* fallback) {
  return value != nullptr && *value != '\0' ? fs::path(value) : fs::path(fallback);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = text.find(sep, start);
    out.push_back(text.substr(start, end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

template <typename U>
std::vector<U> parse_list(const char* text, const char* what) {
  std::vector<U> out;
  if (text == nullptr || *text == '\0') return out;
  for (const std::string& item : split(text, ',')) {
    U v{};
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || end != item.data() + item.size()) {
      throw mtsnn::ConfigError(std::string("bad ") + what + " entry '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::string read_file(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("file not found: " + path.string());
  return mtsnn::read_text_file(path);
}

}  // namespace

extern "C" {

const char* mtsnn_version(void) { return MTSNN_VERSION; }

const char* mtsnn_last_error(void) { return last_error.c_str(); }

void mtsnn_string_free(char* s) { delete[] s; }

mtsnn_status mtsnn_config_from_string(const char* text, mtsnn_config** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    auto cfg = std::make_unique<mtsnn_config>();
    cfg->entries = mtsnn::read_config_entries(text);
    cfg->resolved = mtsnn::resolve_config(cfg->entries);
    *out = cfg.release();
    return MTSNN_OK;
  });
}

mtsnn_status mtsnn_config_load(const char* path, mtsnn_config** out) {
  return guarded([&] {
    const std::string text = read_file(require(path, "path"));
    return mtsnn_config_from_string(text.c_str(), out);
  });
}

mtsnn_status mtsnn_config_set(mtsnn_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    mtsnn::ConfigEntries entries = config->entries;
    mtsnn::set_entry(entries, require(key, "key"), require(value, "value"));
    config->resolved = mtsnn::resolve_config(entries);
    config->entries = std::move(entries);
    return MTSNN_OK;
  });
}

mtsnn_status mtsnn_config_to_string(const mtsnn_config* config, char* buffer, size_t capacity, size_t* required) {
  return guarded([&] {
    const std::string text = mtsnn::to_config_text(require(config, "config")->resolved);
    if (required != nullptr) *required = text.size() + 1;
    if (buffer != nullptr && capacity > 0) {
      const std::size_t n = std::min(capacity - 1, text.size());
      std::memcpy(buffer, text.data(), n);
      buffer[n] = '\0';
    }
    return MTSNN_OK;
  });
}

void mtsnn_config_free(mtsnn_config* config) { delete config; }

mtsnn_status mtsnn_train(const mtsnn_config* config, const mtsnn_train_options* options, mtsnn_train_result* result) {
  return guarded([&] {
    require(config, "config");
    require(result, "result");
    const mtsnn_train_options opts = options != nullptr ? *options : mtsnn_train_options{};
    std::function<void(const mtsnn::EpochRecord&)> on_record;
    if (opts.on_epoch != nullptr) {
      on_record = [&](const mtsnn::EpochRecord& r) {
        const mtsnn_epoch_record c{r.epoch, r.split.c_str(), r.loss, r.accuracy, r.lr, r.seconds};
        opts.on_epoch(&c, opts.user);
      };
    }
    const fs::path resume = opts.resume_from != nullptr ? fs::path(opts.resume_from) : fs::path();
    const mtsnn::TrainRun run = mtsnn::train_run(config->resolved, path_or(opts.data_root, ""),
                                                 path_or(opts.out_root, "runs"), resume, on_record);
    *result = mtsnn_train_result{};
    result->peak_test_accuracy = run.metrics.peak_test_accuracy;
    result->final_test_accuracy = run.metrics.final_test_accuracy;
    result->peak_epoch = run.metrics.peak_epoch;
    result->epochs = run.metrics.rows.empty() ? 0 : run.metrics.rows.back().epoch + 1;
    const std::string dir = run.run_dir.string();
    std::strncpy(result->run_dir, dir.c_str(), sizeof result->run_dir - 1);
    return MTSNN_OK;
  });
}

mtsnn_status mtsnn_model_load(const char* checkpoint_path, mtsnn_model** out) {
  return guarded([&] {
    const fs::path path = require(checkpoint_path, "checkpoint_path");
    require(out, "out");
    if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
    *out = new mtsnn_model{mtsnn::load_model(path)};
    return MTSNN_OK;
  });
}

mtsnn_status mtsnn_model_parameter_count(const mtsnn_model* model, size_t* count) {
  return guarded([&] {
    *require(count, "count") = require(model, "model")->loaded.model.parameter_count();
    return MTSNN_OK;
  });
}

void mtsnn_model_free(mtsnn_model* model) { delete model; }

mtsnn_status mtsnn_evaluate(mtsnn_model* model, const char* data_root, const char* split, mtsnn_evaluation* result) {
  return guarded([&] {
    require(model, "model");
    require(result, "result");
    const std::string which = split != nullptr ? split : "test";
    if (which != "train" && which != "test") throw mtsnn::ConfigError("split must be train or test, got '" + which + "'");
    const mtsnn::RunConfig& cfg = model->loaded.config;
    mtsnn::CifarSplits data = mtsnn::load_datasets(cfg, path_or(data_root, ""));
    const mtsnn::Dataset& d = which == "train" ? data.train : data.test;
    const mtsnn::Evaluation e = mtsnn::evaluate(model->loaded.model, d, cfg.train.batch_size, cfg.train.loss);
    *result = mtsnn_evaluation{e.loss, e.accuracy, d.size()};
    return MTSNN_OK;
  });
}

mtsnn_status mtsnn_verify(const mtsnn_model* model, const mtsnn_verify_options* options, char** json, int* passed) {
  return guarded([&] {
    require(model, "model");
    require(json, "json");
    const mtsnn_verify_options opts = options != nullptr ? *options : mtsnn_verify_options{};
    mtsnn::VerifyOptions v;
    if (opts.images != 0) v.images = opts.images;
    if (opts.precision_bits != 0) v.precision_bits = opts.precision_bits;
    v.inject_multiply = opts.inject_multiply != 0;
    v.seed = opts.seed;
    if (v.precision_bits != 32 && v.precision_bits != 64) {
      throw mtsnn::ConfigError("precision must be 32 or 64, got " + std::to_string(v.precision_bits));
    }
    const mtsnn::CifarSplits data = mtsnn::load_datasets(model->loaded.config, path_or(opts.data_root, ""));
    const mtsnn::VerifyOutcome outcome = mtsnn::verify_model(model->loaded.model, data.test, v);
    *json = copy_out(outcome.json);
    if (passed != nullptr) *passed = outcome.passed ? 1 : 0;
    if (!outcome.passed) {
      last_error = "verification failed";
      return MTSNN_ERR_VERIFY_FAILED;
    }
    return MTSNN_OK;
  });
}

mtsnn_status mtsnn_ablate(const mtsnn_config* config, const mtsnn_ablate_options* options, char** csv) {
  return guarded([&] {
    require(config, "config");
    require(options, "options");
    require(csv, "csv");
    mtsnn::AblationSpec spec;
    spec.axis = mtsnn::parse_ablation_axis(require(options->axis, "axis"));
    if (options->values != nullptr && *options->values != '\0') spec.values = split(options->values, ';');
    spec.steps = parse_list<std::size_t>(options->steps, "steps");
    spec.seeds = parse_list<std::uint64_t>(options->seeds, "seeds");
    std::function<void(const std::string&)> log;
    if (options->log != nullptr) log = [&](const std::string& line) { options->log(line.c_str(), options->user); };
    const auto rows = mtsnn::run_ablation(config->resolved, spec, path_or(options->data_root, ""),
                                          path_or(options->out_root, "runs"), log);
    *csv = copy_out(mtsnn::ablation_csv(spec.axis, rows));
    return MTSNN_OK;
  });
}

mtsnn_status mtsnn_plot(const char* const* run_dirs, size_t count, const char* out_dir, char** written) {
  return guarded([&] {
    if (count > 0) require(run_dirs, "run_dirs");
    std::vector<fs::path> dirs;
    for (std::size_t i = 0; i < count; ++i) dirs.emplace_back(require(run_dirs[i], "run_dirs entry"));
    const auto files = mtsnn::plot_runs(dirs, path_or(out_dir, "plots"));
    std::string list;
    for (const auto& f : files) list += f.string() + "\n";
    if (written != nullptr) *written = copy_out(list);
    return MTSNN_OK;
  });
}

}  // extern "C"
