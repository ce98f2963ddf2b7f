#include "mtsnn/train.hpp"

#include <chrono>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mtsnn/ops.hpp"

namespace mtsnn {

namespace fs = std::filesystem;

template <typename T>
SgdState<T> make_sgd_state(std::span<const NamedTensor<T>> params, T momentum) {
  SgdState<T> s;
  s.momentum = momentum;
  for (const auto& p : params) s.velocity.emplace_back(p.tensor.numel(), T{0});
  return s;
}

template <typename T>
void sgd_step(std::span<NamedTensor<T>> params, const Gradients<T>& grads, SgdState<T>& state, T lr) {
  if (state.velocity.size() != params.size()) {
    throw std::invalid_argument("sgd_step: optimizer tracks " + std::to_string(state.velocity.size()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  for (const auto& p : params) {
    if (!grads.contains(p.tensor)) throw std::invalid_argument("sgd_step: no gradient for parameter '" + p.name + "'");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = grads.at(params[i].tensor).values();
    auto v = std::span<T>(state.velocity[i]);
    auto w = params[i].tensor.mutable_values();
    if (g.size() != w.size() || v.size() != w.size()) {
      throw ShapeError("sgd_step: size mismatch for parameter '" + params[i].name + "'");
    }
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = state.momentum * v[j] + g[j];
      w[j] -= lr * v[j];
    }
  }
}

double lr_at(double base_lr, std::span<const Milestone> milestones, std::size_t epoch) {
  double lr = base_lr;
  for (const auto& m : milestones)
    if (epoch >= m.epoch) lr *= m.multiplier;
  return lr;
}

template <typename T>
Tensor<T> classification_loss(const StepOutputs<T>& outputs, std::span<const int> labels, LossKind kind) {
  const Tensor<T>& scores = outputs.mean;
  if (scores.rank() != 2 || scores.dim(0) != labels.size()) {
    throw ShapeError("loss: scores " + to_string(scores.shape()) + " for " + std::to_string(labels.size()) + " labels");
  }
  if (kind == LossKind::SoftmaxCe) return nll_loss(log_softmax(scores), labels);
  const std::size_t classes = scores.dim(1);
  std::vector<T> target(scores.numel(), T{0});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::out_of_range("loss: label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(classes) + ")");
    }
    target[i * classes + static_cast<std::size_t>(labels[i])] = T{1};
  }
  Tensor<T> diff = sub(scores, Tensor<T>(scores.shape(), std::move(target)));
  return mean(mul(diff, diff));
}

template <typename T>
std::size_t count_correct(const Tensor<T>& scores, std::span<const int> labels) {
  const std::size_t classes = scores.dim(1);
  auto v = scores.values();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (v[i * classes + c] > v[i * classes + best]) best = c;
    if (static_cast<int>(best) == labels[i]) ++correct;
  }
  return correct;
}

namespace {

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_real(const std::string& s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("metrics: bad number '" + s + "'");
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

constexpr std::uint64_t kDataStream = 0x9e3779b97f4a7c15ULL;

}  // namespace

std::string metrics_to_csv(std::span<const EpochRecord> rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    char seconds[32];
    std::snprintf(seconds, sizeof seconds, "%.3f", r.seconds);
    out += std::to_string(r.epoch) + "," + r.split + "," + format_real(r.loss) + "," + format_real(r.accuracy) + "," +
           format_real(r.lr) + "," + seconds + "\n";
  }
  return out;
}

std::vector<EpochRecord> metrics_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::invalid_argument("metrics: missing header '" + std::string(kMetricsHeader) + "'");
  }
  std::vector<EpochRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw std::invalid_argument("metrics: malformed row '" + line + "'");
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(parse_real(cells[0]));
    r.split = cells[1];
    r.loss = parse_real(cells[2]);
    r.accuracy = parse_real(cells[3]);
    r.lr = parse_real(cells[4]);
    r.seconds = parse_real(cells[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

RunMetrics summarize(std::vector<EpochRecord> rows, std::uint64_t seed) {
  RunMetrics m;
  m.seed = seed;
  bool any = false;
  for (const auto& r : rows) {
    if (r.split != "test") continue;
    if (!any || r.accuracy > m.peak_test_accuracy) {
      m.peak_test_accuracy = r.accuracy;
      m.peak_epoch = r.epoch;
    }
    m.final_test_accuracy = r.accuracy;
    any = true;
  }
  m.rows = std::move(rows);
  return m;
}

template <typename T>
Evaluation evaluate(Model<T>& model, const Dataset& data, std::size_t batch_size, LossKind loss) {
  if (batch_size == 0) throw std::invalid_argument("evaluate: batch size must be positive");
  NoGradGuard no_grad;
  Evaluation e;
  if (data.size() == 0) return e;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double loss_sum = 0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < order.size(); b += batch_size) {
    auto idx = std::span<const std::size_t>(order).subspan(b, std::min(batch_size, order.size() - b));
    const auto labels = batch_labels(data, idx);
    StepOutputs<T> out = model.forward(make_batch<T>(data, idx), Mode::Eval);
    loss_sum += static_cast<double>(classification_loss(out, labels, loss).item()) * static_cast<double>(idx.size());
    correct += count_correct(out.mean, labels);
  }
  e.loss = loss_sum / static_cast<double>(data.size());
  e.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return e;
}

Checkpoint model_checkpoint(const Model<float>& model, const std::string& config_text) {
  Checkpoint ck;
  ck.add_bytes("config", config_text);
  for (auto& e : model.state()) ck.add_tensor("model/" + e.name, e.shape, e.values);
  return ck;
}

namespace {

StateDict model_state_from(const Checkpoint& ck) {
  StateDict state;
  for (const auto& e : ck.entries()) {
    if (e.name.rfind("model/", 0) == 0) state.push_back({e.name.substr(6), e.shape, e.values});
  }
  return state;
}

}  // namespace

LoadedModel load_model(const fs::path& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (!ck.contains("config")) throw CheckpointError(path.string() + ": checkpoint carries no config");
  RunConfig config = parse_run_config(ck.bytes("config"));
  Model<float> model(config.model, 0);
  StateDict state = model_state_from(ck);
  if (state.empty()) throw CheckpointError(path.string() + ": checkpoint carries no model weights");
  model.load_state(state);
  return LoadedModel{std::move(config), std::move(model)};
}

RunMetrics fit(Model<float>& model, const Dataset& train, const Dataset& test, const FitOptions& options) {
  const TrainConfig& tc = options.train;
  if (tc.batch_size == 0) throw std::invalid_argument("fit: batch size must be positive");
  if (train.size() == 0) throw std::invalid_argument("fit: training set is empty");
  const bool augment_images = tc.augment && !train.frames;

  std::vector<NamedTensor<float>> params = model.parameters();
  SgdState<float> sgd = make_sgd_state<float>(params, static_cast<float>(tc.momentum));
  Rng rng(tc.seed ^ kDataStream);
  std::vector<EpochRecord> rows;
  std::size_t start_epoch = 0;

  if (!options.resume_from.empty()) {
    Checkpoint ck = Checkpoint::load(options.resume_from);
    model.load_state(model_state_from(ck));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& e = ck.at("velocity/" + params[i].name);
      if (e.values.size() != sgd.velocity[i].size()) {
        throw CheckpointError("velocity for '" + params[i].name + "' has the wrong size");
      }
      for (std::size_t j = 0; j < e.values.size(); ++j) sgd.velocity[i][j] = static_cast<float>(e.values[j]);
    }
    rng = deserialize_rng(ck.bytes("rng"));
    start_epoch = static_cast<std::size_t>(ck.at("epoch").values.at(0));
    rows = metrics_from_csv(ck.bytes("metrics"));
  }

  fs::path ckpt_dir;
  if (!options.out_dir.empty()) {
    ckpt_dir = options.out_dir / "checkpoints";
    fs::create_directories(ckpt_dir);
  }

  auto save = [&](std::size_t next_epoch, const fs::path& path) {
    Checkpoint ck = model_checkpoint(model, options.config_text);
    for (std::size_t i = 0; i < params.size(); ++i) {
      ck.add_tensor("velocity/" + params[i].name, params[i].tensor.shape(),
                    std::vector<double>(sgd.velocity[i].begin(), sgd.velocity[i].end()));
    }
    ck.add_bytes("rng", serialize_rng(rng));
    ck.add_tensor("epoch", Shape{1}, {static_cast<double>(next_epoch)});
    ck.add_bytes("metrics", metrics_to_csv(rows));
    ck.save(path);
  };

  std::vector<std::size_t> order(train.size());
  const std::size_t n = train.sample_size();
  for (std::size_t epoch = start_epoch; epoch < tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(tc.lr, tc.milestones, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    double loss_sum = 0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += tc.batch_size, ++batch_index) {
      auto idx = std::span<const std::size_t>(order).subspan(b, std::min(tc.batch_size, order.size() - b));
      const auto labels = batch_labels(train, idx);
      Tensor<float> x = make_batch<float>(train, idx);
      if (augment_images) {
        auto values = x.mutable_values();
        for (std::size_t j = 0; j < idx.size(); ++j) augment(values.subspan(j * n, n), train.sample_shape, rng);
      }
      StepOutputs<float> out = model.forward(x, Mode::Train);
      Tensor<float> loss = classification_loss(out, labels, tc.loss);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        throw TrainingError("non-finite loss " + format_real(lv) + " at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + ", lr " + format_real(lr));
      }
      Gradients<float> grads = backward(loss);
      sgd_step<float>(params, grads, sgd, static_cast<float>(lr));
      loss_sum += lv * static_cast<double>(idx.size());
      correct += count_correct(out.mean, labels);
    }
    const double train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochRecord tr{epoch, "train", loss_sum / static_cast<double>(train.size()),
                   static_cast<double>(correct) / static_cast<double>(train.size()), lr, train_seconds};
    rows.push_back(tr);
    if (options.on_record) options.on_record(tr);

    const auto t1 = std::chrono::steady_clock::now();
    const Evaluation ev = evaluate(model, test, tc.batch_size, tc.loss);
    EpochRecord te{epoch, "test", ev.loss, ev.accuracy, lr,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count()};
    rows.push_back(te);
    if (options.on_record) options.on_record(te);

    if (!options.out_dir.empty()) {
      write_text(options.out_dir / "metrics.csv", metrics_to_csv(rows));
      const bool last = epoch + 1 == tc.epochs;
      if (last || (tc.checkpoint_every != 0 && (epoch + 1) % tc.checkpoint_every == 0)) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch-%04zu.ckpt", epoch);
        save(epoch + 1, ckpt_dir / name);
        if (last) save(epoch + 1, ckpt_dir / "final.ckpt");
      }
    }
  }
  return summarize(std::move(rows), tc.seed);
}

#define MTSNN_INSTANTIATE_TRAIN(T)                                                                              \
  template SgdState<T> make_sgd_state(std::span<const NamedTensor<T>>, T);                                     \
  template void sgd_step(std::span<NamedTensor<T>>, const Gradients<T>&, SgdState<T>&, T);                     \
  template Tensor<T> classification_loss(const StepOutputs<T>&, std::span<const int>, LossKind);                \
  template std::size_t count_correct(const Tensor<T>&, std::span<const int>);                                  \
  template Evaluation evaluate(Model<T>&, const Dataset&, std::size_t, LossKind);

MTSNN_INSTANTIATE_TRAIN(float)
MTSNN_INSTANTIATE_TRAIN(double)

}  // namespace mtsnn
