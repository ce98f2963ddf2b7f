// Acceptance gate: one PASS/FAIL line per criterion.
//
//   acceptance properties   criteria 1-5, 9, 10 (seconds)
//   acceptance desk         criteria 6-8 (tiny VGG on a CIFAR-10 subset, ~hours on one core)
//
// Exit status is 0 only when every criterion of the chosen suite passes.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtsnn/experiment.hpp"
#include "mtsnn/mfree.hpp"
#include "mtsnn/neuron.hpp"
#include "testing.hpp"

using namespace mtsnn;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool passed, const std::string& what, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", passed ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!passed) ++failures;
}

template <typename F>
void guarded(int id, const std::string& what, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, what, std::string("exception: ") + e.what());
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename T>
Tensor<T> cast(const Tensor<double>& x) {
  std::vector<T> v(x.values().begin(), x.values().end());
  return Tensor<T>(x.shape(), std::move(v));
}

std::vector<double> random_deltas(Rng& rng, std::size_t n) {
  std::set<double> picked;
  while (picked.size() < n) {
    const double d = std::round((uniform01(rng) - 0.5) * 100.0) / 100.0;  // in [-0.5, 0.5]
    if (d != 0.0) picked.insert(d);
  }
  return {picked.begin(), picked.end()};
}

// 1. Multi-threshold convolution equals the sum of scatter-adds.
void equivalence() {
  const std::string what = "per-threshold accumulation equals dense conv of summed spikes";
  Rng rng(101);
  const auto t0 = Clock::now();
  double worst32 = 0, worst64 = 0;
  bool ok = true;
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t n = 1 + uniform_index(rng, 4);
    const auto deltas = random_deltas(rng, n);
    const std::size_t c = 1 + uniform_index(rng, 3), o = 1 + uniform_index(rng, 4), k = std::array<std::size_t, 3>{1, 3, 5}[uniform_index(rng, 3)];
    const std::size_t hw = 5 + uniform_index(rng, 6);
    const Conv2dOptions opts{1 + uniform_index(rng, 2), uniform_index(rng, 2) ? Padding::Same : Padding::Valid};
    const auto h = testing::random_tensor({1 + uniform_index(rng, 2), c, hw, hw}, rng, 0.7, 1.0);
    // Fan-in-scaled like the model's own initialisation.
    const auto kernel = testing::random_tensor({o, c, k, k}, rng, std::sqrt(2.0 / static_cast<double>(c * k * k)));
    const auto r64 = mt_equivalence_check<double>(h, 1.0, deltas, kernel, opts);
    const auto r32 = mt_equivalence_check<float>(cast<float>(h), 1.0f, deltas, cast<float>(kernel), opts);
    worst64 = std::max(worst64, r64.max_abs_diff);
    worst32 = std::max(worst32, r32.max_abs_diff);
    ok = ok && r64.passed && r32.passed && r64.max_abs_diff < 1e-12 && r32.max_abs_diff < 1e-5 &&
         r64.accumulated.multiplications == 0;
  }
  const double secs = seconds_since(t0);
  report(1, ok && secs < 10.0, what,
         "100 draws, max diff f32 " + fmt(worst32) + " < 1e-5, f64 " + fmt(worst64) + " < 1e-12, " + fmt(secs) + " s < 10 s");
}

RunConfig small_spiking(Arch arch, std::size_t steps) {
  RunConfig c;
  c.model.arch = arch;
  c.model.stages = arch == Arch::Vgg ? std::vector<StageSpec>{{1, 8}, {2, 16}} : std::vector<StageSpec>{{2, 8}, {2, 16}};
  c.model.fc_widths = arch == Arch::Vgg ? std::vector<std::size_t>{16} : std::vector<std::size_t>{};
  c.model.input_shape = {3, 16, 16};
  c.model.class_count = 4;
  c.model.steps = steps;
  c.model.mt.deltas = {-0.3, 0.3};
  c.data.dataset = "synth";
  c.data.synth_test = 8;
  return c;
}

// 2. No multiplications inside accumulation kernels; an injected multiply is caught.
void multiplication_free() {
  const std::string what = "zero multiplications in spike-input accumulation kernels, injected multiply flips verify";
  std::string detail;
  bool ok = true;
  for (Arch arch : {Arch::Vgg, Arch::ResNet}) {
    const RunConfig cfg = small_spiking(arch, 2);
    Model<float> model(cfg.model, 17);
    const Dataset data = synth_dataset(8, cfg.model.class_count, 18, cfg.model.input_shape);
    VerifyOptions o;
    o.images = 8;
    const auto clean = verify_model(model, data, o);
    const auto j = nlohmann::json::parse(clean.json);
    std::uint64_t accum_adds = 0, accum_muls = 0;
    for (const auto& [tag, counts] : j["op_counts"].items()) {
      if (!is_accumulation_tag(tag)) continue;
      accum_adds += counts["additions"].get<std::uint64_t>();
      accum_muls += counts["multiplications"].get<std::uint64_t>();
    }
    o.inject_multiply = true;
    const auto injected = verify_model(model, data, o);
    const bool arch_ok = clean.passed && accum_muls == 0 && accum_adds > 0 && !injected.passed;
    ok = ok && arch_ok;
    detail += to_string(arch) + ": " + std::to_string(accum_muls) + " muls over " + std::to_string(accum_adds) +
              " adds, clean " + (clean.passed ? "PASS" : "FAIL") + ", injected " + (injected.passed ? "PASS" : "FAIL") +
              "; ";
  }
  detail.resize(detail.size() - 2);
  report(2, ok, what, detail);
}

// 3. Backward of the spike primitive equals the summed rectangular windows exactly.
void surrogate_windows() {
  const std::string what = "spike backward equals the rectangular window per threshold and their sum under MT";
  std::size_t points = 0, mismatches = 0;
  const double v_th = 1.0;
  // Threshold i sits at H - V_th = delta_i (0 for the base spike).
  auto window = [](double shifted, double width) { return std::abs(shifted) <= width / 2 ? 1.0 / width : 0.0; };
  for (double width : {1.0, 0.5, 0.25}) {
    for (const std::vector<double>& deltas :
         {std::vector<double>{}, {0.3}, {-0.3, 0.3}, {-0.25, 0.125}, {-0.4, -0.2, 0.2, 0.4}}) {
      std::vector<double> offsets{0.0};
      offsets.insert(offsets.end(), deltas.begin(), deltas.end());
      // Grid straddling every window edge, edges included.
      std::vector<double> grid;
      for (double off : offsets) {
        const double thr = v_th + off;
        for (int i = -24; i <= 24; ++i) grid.push_back(thr + i * width / 32.0);
        grid.push_back(thr - width / 2);
        grid.push_back(thr + width / 2);
      }
      Tensor<double> h({grid.size()}, grid, true);
      NeuronParams<double> p;
      p.surrogate_width = width;
      const auto g = backward(sum(fire_mt(h, p, std::span<const double>(deltas)).sum)).at(h);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        double expected = 0;
        for (double off : offsets) expected += window((grid[i] - v_th) - off, width);
        ++points;
        if (g.at(i) != expected) ++mismatches;
      }
      std::vector<double> centred(grid.size());
      for (std::size_t i = 0; i < grid.size(); ++i) centred[i] = grid[i] - v_th;
      for (double off : offsets) {
        Tensor<double> hs({grid.size()}, grid, true);
        const std::vector<double> one{off};
        const auto gs = backward(sum(threshold_spikes<double>(hs, v_th, one, width, SpikeForward::Heaviside))).at(hs);
        const auto analytic = rectangular_window(Tensor<double>({grid.size()}, centred), off, width);
        for (std::size_t i = 0; i < grid.size(); ++i) {
          ++points;
          if (gs.at(i) != analytic.at(i)) ++mismatches;
        }
      }
    }
  }
  report(3, mismatches == 0, what, std::to_string(points) + " grid points, " + std::to_string(mismatches) + " mismatches");
}

// 4. Central differences for every primitive and the unrolled tiny-model loss.
void finite_differences() {
  const std::string what = "primitives within rel 1e-4, full T-step model loss within rel 1e-3 (64-bit)";
  double worst_prim = 0;
  std::string worst_name;
  const auto cases = testing::primitive_cases();
  for (const auto& c : cases) {
    const double e = testing::gradcheck(c.f, c.inputs);
    if (e >= worst_prim) worst_prim = e, worst_name = c.name;
  }
  double worst_model = 0;
  Rng rng(15);
  for (OutputMode mode : {OutputMode::Membrane, OutputMode::SpikeVoting}) {
    for (Arch arch : {Arch::Vgg, Arch::ResNet}) {
      ModelConfig c = small_spiking(arch, 3).model;
      c.input_shape = {3, 8, 8};
      c.class_count = 3;
      c.output_mode = mode;
      c.voting_group = 2;
      Model<double> m(c, 14);
      m.set_spike_forward(SpikeForward::SurrogateRamp);
      const auto x = testing::random_tensor({3, 3, 8, 8}, rng, 0.5, 0.5);
      worst_model = std::max(worst_model, testing::model_gradcheck(m, x, {0, 1, 2}, 4));
    }
  }
  report(4, worst_prim < 1e-4 && worst_model < 1e-3, what,
         std::to_string(cases.size()) + " primitive cases, worst " + fmt(worst_prim) + " (" + worst_name +
             "); model worst " + fmt(worst_model) + " over vgg/resnet x membrane/voting, T=3");
}

// 5. Spike algebra on a million membrane values.
void spike_algebra() {
  const std::string what = "binary spikes, integral S_sum in [0, n+1], deltas=[] matches ST, base-spike reset";
  Rng rng(55);
  const std::size_t chunks = 10, per = 100000;
  std::size_t bad = 0;
  for (std::size_t chunk = 0; chunk < chunks; ++chunk) {
    const auto h = testing::random_tensor({per}, rng, 1.0, 1.0);
    const auto deltas = random_deltas(rng, 1 + chunk % 4);
    NeuronParams<double> p;
    const auto fired = fire_mt(h, p, std::span<const double>(deltas));
    std::vector<Tensor<double>> planes{fired.base};
    for (double d : deltas) {
      const std::vector<double> off{d};
      planes.push_back(threshold_spikes<double>(h, 1.0, off, 1.0, SpikeForward::Heaviside));
    }
    const auto st = fire_st(h, p);
    const auto flat = fire_mt(h, p, std::span<const double>()).sum;
    const auto v = reset(h, fired.base, p);
    for (std::size_t i = 0; i < per; ++i) {
      double total = 0;
      for (const auto& s : planes) {
        const double b = s.at(i);
        if (b != 0.0 && b != 1.0) ++bad;
        total += b;
      }
      const double sum = fired.sum.at(i);
      if (sum != total || sum != std::floor(sum) || sum < 0 || sum > static_cast<double>(deltas.size() + 1)) ++bad;
      if (flat.at(i) != st.at(i)) ++bad;
      if (fired.base.at(i) == 1.0 ? v.at(i) != 0.0 : v.at(i) != h.at(i)) ++bad;
    }
  }
  report(5, bad == 0, what, std::to_string(chunks * per) + " values, " + std::to_string(bad) + " violations");
}

// 9. CIFAR bytes round-trip; event frames conserve counts.
void data_layer() {
  const std::string what = "CIFAR-10 byte round-trip, event frames conserve counts";
  Rng rng(99);
  std::vector<std::uint8_t> bytes;
  for (int r = 0; r < 200; ++r) {
    bytes.push_back(static_cast<std::uint8_t>(uniform_index(rng, 10)));
    for (std::size_t i = 0; i < kCifarRecordBytes - 1; ++i) bytes.push_back(static_cast<std::uint8_t>(rng()));
  }
  const bool cifar_ok = serialize_cifar10(parse_cifar10(bytes, "random")) == bytes;
  std::size_t bad = 0, streams = 0;
  for (int s = 0; s < 1000; ++s, ++streams) {
    const std::size_t w = 1 + uniform_index(rng, 16), h = 1 + uniform_index(rng, 16), n = uniform_index(rng, 300);
    std::vector<EventRecord> ev(n);
    std::uint32_t t = 0;
    std::map<std::size_t, float> hist;
    for (auto& e : ev) {
      t += static_cast<std::uint32_t>(uniform_index(rng, 50));
      e = {t, static_cast<std::uint16_t>(uniform_index(rng, w)), static_cast<std::uint16_t>(uniform_index(rng, h)),
           static_cast<std::uint8_t>(uniform_index(rng, 2))};
      hist[(e.polarity * h + e.y) * w + e.x] += 1;
    }
    for (std::size_t steps : {1, 2, 5, 10}) {
      for (EventSlicing slicing : {EventSlicing::Count, EventSlicing::Time}) {
        const auto f = events_to_frames(ev, steps, h, w, slicing);
        const std::size_t plane = 2 * h * w;
        if (f.counts.size() != steps * plane) {
          ++bad;
          continue;
        }
        for (std::size_t cell = 0; cell < plane; ++cell) {
          float total = 0;
          for (std::size_t k = 0; k < steps; ++k) total += f.counts[k * plane + cell];
          const auto it = hist.find(cell);
          if (total != (it == hist.end() ? 0.0f : it->second)) ++bad;
        }
      }
    }
  }
  report(9, cifar_ok && bad == 0, what,
         std::string("200 records ") + (cifar_ok ? "byte-exact" : "DIFFER") + "; " + std::to_string(streams) +
             " streams x T{1,2,5,10} x count/time slicing, " + std::to_string(bad) + " cells off");
}

// Metrics without the wall-clock column.
std::string timing_free(const std::vector<EpochRecord>& rows) {
  std::ostringstream os;
  for (const auto& r : rows) os << r.epoch << ',' << r.split << ',' << fmt(r.loss) << ',' << fmt(r.accuracy) << ',' << r.lr << '\n';
  return os.str();
}

// 10. Same (config, seed) gives the same metrics; resume is bit-exact.
void reproducibility() {
  const std::string what = "identical metrics for identical (config, seed), bit-exact resume";
  RunConfig cfg = small_spiking(Arch::Vgg, 2);
  cfg.train.epochs = 3;
  cfg.train.batch_size = 16;
  cfg.train.lr = 0.05;
  cfg.train.seed = 21;
  cfg.data.synth_train = 64;
  cfg.data.synth_test = 32;
  const fs::path root = fs::temp_directory_path() / "mtsnn-acceptance-repro";
  fs::remove_all(root);
  const TrainRun a = train_run(cfg, {}, root);
  const TrainRun b = train_run(cfg, {}, root);
  const bool same = timing_free(a.metrics.rows) == timing_free(b.metrics.rows);

  const CifarSplits data = load_datasets(cfg, {});
  Model<float> resumed(cfg.model, 12345);
  FitOptions o;
  o.train = cfg.train;
  o.out_dir = root / "resumed";
  o.resume_from = a.run_dir / "checkpoints" / "epoch-0000.ckpt";
  const RunMetrics rest = fit(resumed, data.train, data.test, o);
  const bool rows_match = timing_free(rest.rows) == timing_free(a.metrics.rows);
  const LoadedModel full = load_model(a.run_dir / "checkpoints" / "final.ckpt");
  const auto sa = full.model.state(), sb = resumed.state();
  bool weights_match = sa.size() == sb.size();
  for (std::size_t i = 0; weights_match && i < sa.size(); ++i) weights_match = sa[i].values == sb[i].values;
  report(10, same && rows_match && weights_match, what,
         std::string("rerun ") + (same ? "identical" : "DIFFERS") + ", resume rows " + (rows_match ? "identical" : "DIFFER") +
             ", resume weights " + (weights_match ? "bit-exact" : "DIFFER"));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::string pct(double v) { return fmt(std::round(v * 10000.0) / 100.0) + "%"; }

// 6-8. Tiny VGG on a CIFAR-10 subset, three seeds per setting.
void desk_scale() {
  const fs::path data_root = resolve_data_root("");
  const std::string cfg_path = std::string(MTSNN_SOURCE_DIR) + "/configs/tiny_vgg.cfg";
  const std::string w6 = "median MT >= median ST at T=1, both >= 35%";
  const std::string w7 = "ST median at T=3 >= median at T=1 - 0.5%";
  const std::string w8 = "mixed deltas median >= each single-sign median - 0.5% at T=1";
  CifarSplits probe;
  try {
    probe = load_datasets(parse_run_config(read_text_file(cfg_path)), data_root);
  } catch (const std::exception& e) {
    const std::string why = std::string("no data: ") + e.what() + "; set MTSNN_DATA";
    report(6, false, w6, why);
    report(7, false, w7, why);
    report(8, false, w8, why);
    return;
  }
  const fs::path out = fs::path(MTSNN_BINARY_DIR) / "acceptance-runs";
  auto peak = [&](const std::string& deltas, std::size_t steps) {
    std::vector<double> acc;
    for (std::uint64_t seed : {1, 2, 3}) {
      ConfigEntries e = read_config_entries(read_text_file(cfg_path));
      set_entry(e, "mt.deltas", deltas);
      set_entry(e, "model.steps", std::to_string(steps));
      set_entry(e, "train.seed", std::to_string(seed));
      const auto t0 = Clock::now();
      const TrainRun run = train_run(resolve_config(e), data_root, out);
      acc.push_back(run.metrics.peak_test_accuracy);
      std::fprintf(stderr, "desk deltas=[%s] T=%zu seed=%llu peak=%.4f (%.0f s) %s\n", deltas.c_str(), steps,
                   static_cast<unsigned long long>(seed), run.metrics.peak_test_accuracy, seconds_since(t0),
                   run.run_dir.c_str());
    }
    return median(acc);
  };
  double st1 = 0, mt1 = 0;
  guarded(6, w6, [&] {
    st1 = peak("", 1);
    mt1 = peak("-0.3,0.3", 1);
    report(6, mt1 >= st1 && st1 >= 0.35 && mt1 >= 0.35, w6, "MT " + pct(mt1) + ", ST " + pct(st1));
  });
  guarded(7, w7, [&] {
    if (st1 == 0) st1 = peak("", 1);
    const double st3 = peak("", 3);
    report(7, st3 >= st1 - 0.005, w7, "T=3 " + pct(st3) + ", T=1 " + pct(st1));
  });
  guarded(8, w8, [&] {
    if (mt1 == 0) mt1 = peak("-0.3,0.3", 1);
    const double neg = peak("-0.3", 1), pos = peak("0.3", 1);
    report(8, mt1 >= neg - 0.005 && mt1 >= pos - 0.005, w8,
           "mixed " + pct(mt1) + ", negative " + pct(neg) + ", positive " + pct(pos));
  });
}

}  // namespace

int main(int argc, char** argv) {
  const std::string suite = argc > 1 ? argv[1] : "properties";
  if (suite != "properties" && suite != "desk" && suite != "all") {
    std::fprintf(stderr, "usage: %s [properties|desk|all]\n", argv[0]);
    return 2;
  }
  if (suite != "desk") {
    guarded(1, "equivalence", equivalence);
    guarded(2, "multiplication-free", multiplication_free);
    guarded(3, "surrogate windows", surrogate_windows);
    guarded(4, "finite differences", finite_differences);
    guarded(5, "spike algebra", spike_algebra);
    guarded(9, "data layer", data_layer);
    guarded(10, "reproducibility", reproducibility);
  }
  if (suite != "properties") desk_scale();
  std::printf("%s: %d failing\n", failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL", failures);
  return failures == 0 ? 0 : 1;
}
