#include "mtsnn/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mtsnn/mfree.hpp"

namespace mtsnn {

namespace fs = std::filesystem;

std::string read_text_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

CifarSplits load_datasets(const RunConfig& config, const fs::path& data_root) {
  const fs::path root = data_root.empty() ? resolve_data_root(config.data.root) : data_root;
  const DataConfig& d = config.data;
  const ModelConfig& m = config.model;
  if (d.dataset == "synth") {
    // Fixed data seeds: every training seed sees the same samples.
    return CifarSplits{synth_dataset(d.synth_train, m.class_count, 0x5eed0001, m.input_shape),
                       synth_dataset(d.synth_test, m.class_count, 0x5eed0002, m.input_shape)};
  }
  if (d.dataset == "events") {
    CifarSplits s{load_event_dataset(root / "events" / "train", m.steps, d.event_slicing, d.train_limit),
                  load_event_dataset(root / "events" / "test", m.steps, d.event_slicing, d.test_limit)};
    const Shape frame(s.train.sample_shape.begin() + 1, s.train.sample_shape.end());
    if (frame != m.input_shape) {
      throw ConfigError("event frames are " + to_string(frame) + " but model.input_shape is " + to_string(m.input_shape));
    }
    return s;
  }
  if (m.input_shape != Shape{3, 32, 32}) {
    throw ConfigError("cifar10 needs model.input_shape = 3,32,32, got " + to_string(m.input_shape));
  }
  return load_cifar10(root, d.train_limit, d.test_limit);
}

fs::path make_run_dir(const fs::path& out_root, const std::string& name) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream stamp;
  stamp << std::put_time(&tm, "%Y%m%d-%H%M%S");
  fs::create_directories(out_root);
  const std::string base = name + "-" + stamp.str();
  fs::path dir = out_root / base;
  for (int n = 1; fs::exists(dir); ++n) dir = out_root / (base + "-" + std::to_string(n));
  fs::create_directories(dir / "checkpoints");
  return dir;
}

TrainRun train_run(const RunConfig& config, const fs::path& data_root, const fs::path& out_root,
                   const fs::path& resume_from, const std::function<void(const EpochRecord&)>& on_record) {
  CifarSplits data = load_datasets(config, data_root);
  TrainRun run;
  run.run_dir = make_run_dir(out_root, config.name);
  const std::string snapshot = to_config_text(config);
  write_text_file(run.run_dir / "config.ini", snapshot);
  Model<float> model(config.model, config.train.seed);
  FitOptions options;
  options.train = config.train;
  options.out_dir = run.run_dir;
  options.resume_from = resume_from;
  options.config_text = snapshot;
  options.on_record = on_record;
  run.metrics = fit(model, data.train, data.test, options);
  return run;
}

namespace {

using nlohmann::ordered_json;

ordered_json count_json(const OpCount& c) {
  return ordered_json{{"multiplications", c.multiplications}, {"additions", c.additions}, {"comparisons", c.comparisons}};
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

template <typename T>
std::vector<std::pair<std::string, const Conv2dLayer<T>*>> spike_input_convs(const Model<T>& model) {
  std::vector<std::pair<std::string, const Conv2dLayer<T>*>> out;
  for (std::size_t i = 0; i < model.body().size(); ++i) {
    const std::string name = "body" + std::to_string(i);
    std::visit(Overloaded{
                   [&](const ConvBnNeuron<T>& b) { out.emplace_back(name, &b.conv); },
                   [&](const ResidualBlock<T>& b) {
                     out.emplace_back(name + ".first", &b.first.conv);
                     out.emplace_back(name + ".conv2", &b.conv2);
                     if (b.projection) out.emplace_back(name + ".skip", &*b.projection);
                   },
                   [](const auto&) {},
               },
               model.body()[i]);
  }
  return out;
}

template <typename T>
VerifyOutcome verify_impl(const Model<float>& source, const Dataset& data, const VerifyOptions& options) {
  Model<T> model = convert_model<T>(source);
  const ModelConfig& cfg = model.config();
  const std::size_t n = std::min(options.images, data.size());
  if (n == 0) throw std::invalid_argument("verify: no images to run");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Tensor<T> batch = make_batch<T>(data, idx);

  StepOutputs<T> dense;
  {
    NoGradGuard no_grad;
    dense = model.forward(batch, Mode::Eval);
  }
  MfreeResult<T> mf = run_inference_mfree(model, batch, AccumOptions{options.inject_multiply});

  double max_diff = 0;
  auto track = [&](const Tensor<T>& a, const Tensor<T>& b) {
    for (std::size_t i = 0; i < a.numel(); ++i)
      max_diff = std::max(max_diff, std::abs(static_cast<double>(a.at(i)) - static_cast<double>(b.at(i))));
  };
  track(dense.mean, mf.outputs.mean);
  for (std::size_t t = 0; t < dense.per_step.size(); ++t) track(dense.per_step[t], mf.outputs.per_step[t]);
  std::size_t agree = 0;
  const std::size_t classes = dense.mean.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    auto argmax = [&](const Tensor<T>& s) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (s.at(i * classes + c) > s.at(i * classes + best)) best = c;
      return best;
    };
    agree += argmax(dense.mean) == argmax(mf.outputs.mean);
  }
  const bool logits_ok = max_diff < options.logit_tolerance && agree == n;

  std::uint64_t accum_muls = 0;
  ordered_json counts = ordered_json::object();
  for (const auto& [tag, c] : mf.counts.by_tag()) {
    counts[tag] = count_json(c);
    if (is_accumulation_tag(tag)) accum_muls += c.multiplications;
  }

  Rng rng(options.seed);
  bool equivalence_ok = true;
  ordered_json layers = ordered_json::array();
  for (const auto& [name, conv] : spike_input_convs(model)) {
    const std::size_t in_ch = conv->weight.dim(1);
    double worst = 0;
    bool ok = true;
    EquivalenceReport last;
    for (std::size_t d = 0; d < options.draws_per_layer; ++d) {
      std::vector<T> h(in_ch * 64);
      for (auto& v : h) v = static_cast<T>(cfg.v_th + 0.5 * standard_normal(rng));
      last = mt_equivalence_check<T>(Tensor<T>(Shape{1, in_ch, 8, 8}, std::move(h)), static_cast<T>(cfg.v_th),
                                     cfg.mt.deltas, conv->weight, conv->options);
      worst = std::max(worst, last.max_abs_diff);
      ok = ok && last.passed;
    }
    equivalence_ok = equivalence_ok && ok;
    layers.push_back(ordered_json{{"layer", name},
                                  {"draws", options.draws_per_layer},
                                  {"thresholds", last.thresholds},
                                  {"max_abs_diff", worst},
                                  {"tolerance", last.tolerance},
                                  {"dense", count_json(last.dense)},
                                  {"accumulated", count_json(last.accumulated)},
                                  {"passed", ok}});
  }

  VerifyOutcome out;
  out.passed = logits_ok && accum_muls == 0 && equivalence_ok;
  ordered_json report{
      {"passed", out.passed},
      {"precision_bits", sizeof(T) * 8},
      {"images", n},
      {"steps", cfg.steps},
      {"deltas", cfg.mt.deltas},
      {"inject_multiply", options.inject_multiply},
      {"logits",
       ordered_json{{"max_abs_diff", max_diff},
                    {"tolerance", options.logit_tolerance},
                    {"argmax_agreement", agree},
                    {"passed", logits_ok}}},
      {"accumulation_multiplications", accum_muls},
      {"op_counts", counts},
      {"equivalence", layers},
  };
  out.json = report.dump(2) + "\n";
  return out;
}

}  // namespace

VerifyOutcome verify_model(const Model<float>& model, const Dataset& data, const VerifyOptions& options) {
  if (options.precision_bits == 64) return verify_impl<double>(model, data, options);
  if (options.precision_bits == 32) return verify_impl<float>(model, data, options);
  throw std::invalid_argument("verify: precision must be 32 or 64 bits, got " + std::to_string(options.precision_bits));
}

AblationAxis parse_ablation_axis(const std::string& text) {
  if (text == "mt_scope") return AblationAxis::MtScope;
  if (text == "deltas") return AblationAxis::Deltas;
  if (text == "steps") return AblationAxis::Steps;
  throw ConfigError("unknown ablation axis '" + text + "' (expected mt_scope, deltas or steps)");
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::MtScope: return "mt_scope";
    case AblationAxis::Deltas: return "deltas";
    case AblationAxis::Steps: return "steps";
  }
  return "?";
}

std::vector<std::pair<std::string, RunConfig>> ablation_grid(const RunConfig& base, const AblationSpec& spec) {
  if (spec.values.empty()) throw ConfigError("ablation: no values given for axis " + to_string(spec.axis));
  const std::vector<std::size_t> steps =
      spec.axis == AblationAxis::Steps || spec.steps.empty() ? std::vector<std::size_t>{0} : spec.steps;
  const std::vector<std::uint64_t> seeds = spec.seeds.empty() ? std::vector<std::uint64_t>{base.train.seed} : spec.seeds;
  std::vector<std::pair<std::string, RunConfig>> grid;
  for (std::size_t v = 0; v < spec.values.size(); ++v) {
    for (std::size_t s : steps) {
      for (std::uint64_t seed : seeds) {
        ConfigEntries entries = read_config_entries(to_config_text(base));
        std::string setting = spec.values[v];
        switch (spec.axis) {
          case AblationAxis::MtScope: set_entry(entries, "mt.scope", setting); break;
          case AblationAxis::Deltas:
            if (setting == "none" || setting == "[]") setting = "";
            set_entry(entries, "mt.deltas", setting);
            if (setting.empty()) setting = "none";
            break;
          case AblationAxis::Steps: set_entry(entries, "model.steps", setting); break;
        }
        if (s != 0) set_entry(entries, "model.steps", std::to_string(s));
        set_entry(entries, "train.seed", std::to_string(seed));
        RunConfig cfg = resolve_config(entries);
        cfg.name = base.name + "-" + to_string(spec.axis) + std::to_string(v) + "-T" + std::to_string(cfg.model.steps) +
                   "-s" + std::to_string(seed);
        grid.emplace_back(setting, std::move(cfg));
      }
    }
  }
  return grid;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, const AblationSpec& spec, const fs::path& data_root,
                                      const fs::path& out_root, const std::function<void(const std::string&)>& log) {
  std::vector<AblationRow> rows;
  for (auto& [setting, cfg] : ablation_grid(base, spec)) {
    if (log) log("ablation " + to_string(spec.axis) + "=" + setting + " steps=" + std::to_string(cfg.model.steps) +
                 " seed=" + std::to_string(cfg.train.seed));
    TrainRun run = train_run(cfg, data_root, out_root);
    rows.push_back({setting, cfg.model.steps, cfg.train.seed, run.metrics.peak_test_accuracy,
                    run.metrics.final_test_accuracy, run.run_dir});
  }
  return rows;
}

std::string ablation_csv(AblationAxis axis, const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "axis,setting,steps,seed,peak_test_accuracy,final_test_accuracy,run_dir\n";
  for (const auto& r : rows) {
    const bool quote = r.setting.find(',') != std::string::npos;
    out << to_string(axis) << ',' << (quote ? "\"" + r.setting + "\"" : r.setting) << ',' << r.steps << ',' << r.seed
        << ',' << std::setprecision(6) << r.peak_test_accuracy << ',' << r.final_test_accuracy << ','
        << r.run_dir.string() << '\n';
  }
  return out.str();
}

namespace {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

std::string fmt(double v, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double W = 720, H = 440, left = 70, right = 200, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  double x0 = 0, x1 = 1;
  bool first = true;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (first) x0 = x1 = x, first = false;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
    }
  if (x1 == x0) x1 = x0 + 1;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - y) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape_xml(title)
      << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = i / 5.0;
    svg << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(py(y)) << "\" x2=\"" << fmt(left + pw) << "\" y2=\""
        << fmt(py(y)) << "\" stroke=\"#e0e0e0\"/>\n";
    svg << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(py(y) + 4) << "\" text-anchor=\"end\">" << fmt(y, 1)
        << "</text>\n";
  }
  const int x_ticks = static_cast<int>(std::min(10.0, x1 - x0));
  for (int i = 0; i <= x_ticks; ++i) {
    const double x = x0 + (x1 - x0) * i / std::max(1, x_ticks);
    svg << "<text x=\"" << fmt(px(x)) << "\" y=\"" << fmt(top + ph + 18) << "\" text-anchor=\"middle\">"
        << fmt(x, x == std::round(x) ? 0 : 1) << "</text>\n";
  }
  svg << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(H - 18) << "\" text-anchor=\"middle\">"
      << escape_xml(x_label) << "</text>\n";
  svg << "<text x=\"18\" y=\"" << fmt(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << fmt(top + ph / 2) << ")\">" << escape_xml(y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = palette[i % 10];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t j = 0; j < series[i].points.size(); ++j) {
      const auto& [x, y] = series[i].points[j];
      svg << (j ? " " : "") << fmt(px(x)) << ',' << fmt(py(y));
    }
    svg << "\"/>\n";
    for (const auto& [x, y] : series[i].points) {
      svg << "<circle cx=\"" << fmt(px(x)) << "\" cy=\"" << fmt(py(y)) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
    const double ly = top + 14 + 18.0 * static_cast<double>(i);
    svg << "<line x1=\"" << fmt(left + pw + 12) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(left + pw + 32)
        << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << fmt(left + pw + 38) << "\" y=\"" << fmt(ly) << "\">" << escape_xml(series[i].label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

struct RunInfo {
  std::string label;
  RunConfig config;
  std::vector<EpochRecord> rows;
};

}  // namespace

std::vector<fs::path> plot_runs(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw ConfigError("plot: no run directories given");
  std::vector<RunInfo> runs;
  for (const auto& dir : run_dirs) {
    const fs::path csv = dir / "metrics.csv";
    if (!fs::exists(csv)) throw std::runtime_error("plot: " + csv.string() + " not found");
    RunInfo info;
    info.label = dir.filename().string();
    if (info.label.empty()) info.label = dir.parent_path().filename().string();
    info.rows = metrics_from_csv(read_text_file(csv));
    const fs::path cfg = dir / "config.ini";
    if (fs::exists(cfg)) info.config = parse_run_config(read_text_file(cfg));
    runs.push_back(std::move(info));
  }
  fs::create_directories(out_dir);
  std::vector<fs::path> written;

  std::vector<Series> by_epoch;
  for (const auto& r : runs) {
    Series s{r.label, {}};
    for (const auto& row : r.rows)
      if (row.split == "test") s.points.emplace_back(static_cast<double>(row.epoch), row.accuracy);
    by_epoch.push_back(std::move(s));
  }
  written.push_back(out_dir / "accuracy_vs_epoch.svg");
  write_text_file(written.back(), line_chart("Test accuracy by epoch", "epoch", "test accuracy", by_epoch));

  std::set<std::size_t> step_values;
  for (const auto& r : runs) step_values.insert(r.config.model.steps);
  if (step_values.size() >= 2) {
    // One curve per threshold setting; each point is the peak accuracy of a run.
    std::map<std::string, std::map<std::size_t, std::vector<double>>> grouped;
    for (const auto& r : runs) {
      std::string label = "ST";
      if (!r.config.model.mt.deltas.empty()) {
        label = "MT [";
        for (std::size_t i = 0; i < r.config.model.mt.deltas.size(); ++i) {
          std::ostringstream d;
          d << r.config.model.mt.deltas[i];
          label += (i ? ", " : "") + d.str();
        }
        label += "]";
      }
      double peak = 0;
      for (const auto& row : r.rows)
        if (row.split == "test") peak = std::max(peak, row.accuracy);
      grouped[label][r.config.model.steps].push_back(peak);
    }
    std::vector<Series> by_steps;
    for (const auto& [label, cells] : grouped) {
      Series s{label, {}};
      for (const auto& [steps, peaks] : cells) {
        const double mean = std::accumulate(peaks.begin(), peaks.end(), 0.0) / static_cast<double>(peaks.size());
        s.points.emplace_back(static_cast<double>(steps), mean);
      }
      by_steps.push_back(std::move(s));
    }
    written.push_back(out_dir / "accuracy_vs_steps.svg");
    write_text_file(written.back(), line_chart("Peak test accuracy by time steps", "time steps", "peak test accuracy",
                                               by_steps));
  }
  return written;
}

}  // namespace mtsnn
