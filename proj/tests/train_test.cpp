#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "mtsnn/train.hpp"
#include "testing.hpp"

using namespace mtsnn;
namespace fs = std::filesystem;

namespace {

struct OneParam {
  std::vector<NamedTensor<double>> params;
  explicit OneParam(double p0) { params.push_back({"p", Tensor<double>({1}, {p0}, true)}); }
  double value() const { return params[0].tensor.item(); }
  // Gradient g of the loss g * p.
  Gradients<double> grad(double g) const { return backward(scale(sum(params[0].tensor), g)); }
};

StepOutputs<double> outputs(const Tensor<double>& logits) { return {{logits}, logits}; }

ModelConfig tiny_synth_model() {
  ModelConfig c = presets::tiny_vgg();
  c.stages = {{1, 8}, {1, 16}};
  c.fc_widths = {32};
  c.input_shape = {3, 16, 16};
  c.class_count = 2;
  return c;
}

TrainConfig quick_train(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 32;
  t.lr = 0.05;
  t.seed = 3;
  return t;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mtsnn-train-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void expect_same_rows(const std::vector<EpochRecord>& a, const std::vector<EpochRecord>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].epoch, b[i].epoch);
    EXPECT_EQ(a[i].split, b[i].split);
    EXPECT_EQ(a[i].loss, b[i].loss) << "row " << i;
    EXPECT_EQ(a[i].accuracy, b[i].accuracy) << "row " << i;
    EXPECT_EQ(a[i].lr, b[i].lr);
  }
}

}  // namespace

TEST(Sgd, PlainStep) {
  OneParam p(1.0);
  auto state = make_sgd_state<double>(p.params, 0.0);
  sgd_step<double>(p.params, p.grad(1.0), state, 0.1);
  EXPECT_DOUBLE_EQ(p.value(), 0.9);
}

TEST(Sgd, MomentumTwoSteps) {
  OneParam p(0.0);
  auto state = make_sgd_state<double>(p.params, 0.9);
  sgd_step<double>(p.params, p.grad(1.0), state, 0.1);
  sgd_step<double>(p.params, p.grad(1.0), state, 0.1);
  EXPECT_NEAR(p.value(), -0.29, 1e-15);
}

TEST(Sgd, ZeroGradientLeavesParameters) {
  OneParam p(0.7);
  auto state = make_sgd_state<double>(p.params, 0.9);
  sgd_step<double>(p.params, p.grad(0.0), state, 0.1);
  EXPECT_EQ(p.value(), 0.7);
}

TEST(Sgd, MissingGradientNamesParameter) {
  OneParam p(1.0);
  auto state = make_sgd_state<double>(p.params, 0.9);
  try {
    sgd_step<double>(p.params, Gradients<double>{}, state, 0.1);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("'p'"), std::string::npos) << e.what();
  }
}

TEST(Loss, UniformLogitsGiveLogClasses) {
  const std::vector<int> labels{2};
  auto l = classification_loss(outputs(Tensor<double>::zeros({1, 5})), labels, LossKind::SoftmaxCe);
  EXPECT_NEAR(l.item(), std::log(5.0), 1e-12);
}

TEST(Loss, TwoClassClosedForm) {
  const std::vector<int> labels{0};
  auto l = classification_loss(outputs(Tensor<double>({1, 2}, {2.0, 0.0})), labels, LossKind::SoftmaxCe);
  EXPECT_NEAR(l.item(), std::log1p(std::exp(-2.0)), 1e-12);
  EXPECT_NEAR(l.item(), 0.1269, 1e-4);
}

TEST(Loss, PerfectOneHotUnderMse) {
  const std::vector<int> labels{1, 0};
  auto l = classification_loss(outputs(Tensor<double>({2, 3}, {0, 1, 0, 1, 0, 0})), labels, LossKind::Mse);
  EXPECT_EQ(l.item(), 0.0);
}

TEST(Loss, CountCorrect) {
  const std::vector<int> labels{1, 0, 2};
  EXPECT_EQ(count_correct(Tensor<double>({3, 3}, {0, 1, 0, 0, 0, 1, 0, 0, 1}), labels), 2u);
}

TEST(Schedule, MilestoneBoundary) {
  const std::vector<Milestone> m{{100, 0.1}};
  EXPECT_DOUBLE_EQ(lr_at(0.1, m, 0), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(0.1, m, 99), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(0.1, m, 100), 0.01);
}

TEST(Metrics, CsvRoundTrip) {
  const std::vector<EpochRecord> rows{{0, "train", 2.25, 0.5, 0.1, 1.25}, {0, "test", 1.0 / 3.0, 0.125, 0.1, 0.5}};
  const std::string csv = metrics_to_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  expect_same_rows(metrics_from_csv(csv), rows);
}

TEST(Fit, DeterministicAcrossRuns) {
  const Dataset train = synth_dataset(64, 2, 1, {3, 16, 16});
  const Dataset test = synth_dataset(32, 2, 2, {3, 16, 16});
  auto run = [&] {
    Model<float> m(tiny_synth_model(), 3);
    FitOptions o;
    o.train = quick_train(2);
    return fit(m, train, test, o);
  };
  const RunMetrics a = run();
  const RunMetrics b = run();
  expect_same_rows(a.rows, b.rows);
  EXPECT_EQ(a.peak_test_accuracy, b.peak_test_accuracy);
}

TEST(Fit, ResumeMatchesUninterruptedRun) {
  const Dataset train = synth_dataset(64, 2, 1, {3, 16, 16});
  const Dataset test = synth_dataset(32, 2, 2, {3, 16, 16});
  const fs::path full_dir = fresh_dir("full");
  Model<float> full(tiny_synth_model(), 3);
  FitOptions o;
  o.train = quick_train(2);
  o.out_dir = full_dir;
  const RunMetrics whole = fit(full, train, test, o);
  ASSERT_TRUE(fs::exists(full_dir / "checkpoints" / "epoch-0000.ckpt"));
  ASSERT_TRUE(fs::exists(full_dir / "metrics.csv"));

  Model<float> resumed(tiny_synth_model(), 99);
  FitOptions r = o;
  r.out_dir = fresh_dir("resumed");
  r.resume_from = full_dir / "checkpoints" / "epoch-0000.ckpt";
  const RunMetrics rest = fit(resumed, train, test, r);
  expect_same_rows(rest.rows, whole.rows);
}

TEST(Fit, DivergenceIsReported) {
  const Dataset train = synth_dataset(32, 2, 1, {3, 16, 16});
  Model<float> m(tiny_synth_model(), 3);
  FitOptions o;
  o.train = quick_train(3);
  o.train.lr = std::numeric_limits<double>::quiet_NaN();
  try {
    fit(m, train, train, o);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

TEST(Fit, SeparableSynthDataIsLearned) {
  const Dataset train = synth_dataset(256, 2, 11, {3, 16, 16});
  const Dataset test = synth_dataset(128, 2, 12, {3, 16, 16});
  Model<float> m(tiny_synth_model(), 5);
  FitOptions o;
  o.train = quick_train(20);
  const RunMetrics r = fit(m, train, test, o);
  EXPECT_GT(r.peak_test_accuracy, 0.95);
  double best_train = 0;
  for (const auto& row : r.rows)
    if (row.split == "train") best_train = std::max(best_train, row.accuracy);
  EXPECT_GT(best_train, 0.95);
}

TEST(LoadModel, RebuildsFromCheckpoint) {
  Model<float> m(tiny_synth_model(), 8);
  RunConfig rc;
  rc.model = tiny_synth_model();
  const fs::path path = fresh_dir("load") / "m.ckpt";
  model_checkpoint(m, to_config_text(rc)).save(path);
  LoadedModel back = load_model(path);
  EXPECT_EQ(back.model.parameter_count(), m.parameter_count());
  EXPECT_EQ(back.model.state().back().values, m.state().back().values);
}
