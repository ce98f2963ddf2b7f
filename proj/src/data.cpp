#include "mtsnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>

namespace mtsnn {

namespace fs = std::filesystem;

std::span<const float> Dataset::sample(std::size_t i) const {
  const std::size_t n = sample_size();
  return std::span<const float>(values).subspan(i * n, n);
}

std::span<float> Dataset::sample(std::size_t i) {
  const std::size_t n = sample_size();
  return std::span<float>(values).subspan(i * n, n);
}

Dataset Dataset::head(std::size_t n) const {
  if (n == 0 || n >= size()) return *this;
  Dataset out;
  out.sample_shape = sample_shape;
  out.frames = frames;
  out.values.assign(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n * sample_size()));
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

template <typename U>
U read_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
  return v;
}

template <typename U>
void write_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

Dataset parse_cifar10(std::span<const std::uint8_t> bytes, const std::string& source) {
  const std::size_t pixels = kCifarRecordBytes - 1;
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % kCifarRecordBytes;
    throw DataError(source + ": truncated record at byte offset " + std::to_string(offset) + " (" +
                    std::to_string(bytes.size() - offset) + " of " + std::to_string(kCifarRecordBytes) + " bytes)");
  }
  Dataset out;
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  out.values.resize(n * pixels);
  out.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw DataError(source + ": label " + std::to_string(rec[0]) + " out of range at byte offset " +
                      std::to_string(r * kCifarRecordBytes));
    }
    out.labels[r] = rec[0];
    float* dst = out.values.data() + r * pixels;
    for (std::size_t i = 0; i < pixels; ++i) dst[i] = static_cast<float>(rec[1 + i]) / 255.0f;
  }
  return out;
}

Dataset load_cifar10_binary(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return parse_cifar10(bytes, path.string());
}

std::vector<std::uint8_t> serialize_cifar10(const Dataset& data) {
  if (data.sample_size() != kCifarRecordBytes - 1) {
    throw DataError("serialize_cifar10: samples are " + to_string(data.sample_shape) + ", expected [3, 32, 32]");
  }
  std::vector<std::uint8_t> out;
  out.reserve(data.size() * kCifarRecordBytes);
  for (std::size_t r = 0; r < data.size(); ++r) {
    out.push_back(static_cast<std::uint8_t>(data.labels[r]));
    for (float v : data.sample(r)) {
      out.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0f), 0L, 255L)));
    }
  }
  return out;
}

CifarSplits load_cifar10(const fs::path& root, std::size_t train_limit, std::size_t test_limit) {
  fs::path dir = root;
  if (!fs::exists(dir / "test_batch.bin") && fs::exists(root / "cifar-10-batches-bin" / "test_batch.bin")) {
    dir = root / "cifar-10-batches-bin";
  }
  if (!fs::exists(dir / "test_batch.bin")) {
    throw DataError("CIFAR-10 dataset not found under " + root.string() +
                    " (expected test_batch.bin, optionally inside cifar-10-batches-bin)");
  }
  CifarSplits out;
  for (int b = 1; b <= 5; ++b) {
    if (train_limit != 0 && out.train.size() >= train_limit) break;
    Dataset part = load_cifar10_binary(dir / ("data_batch_" + std::to_string(b) + ".bin"));
    out.train.values.insert(out.train.values.end(), part.values.begin(), part.values.end());
    out.train.labels.insert(out.train.labels.end(), part.labels.begin(), part.labels.end());
  }
  out.train = out.train.head(train_limit);
  out.test = load_cifar10_binary(dir / "test_batch.bin").head(test_limit);
  return out;
}

AugmentDraw draw_augment(Rng& rng, std::size_t height, std::size_t width) {
  AugmentDraw d;
  d.flip = coin_flip(rng);
  const auto max_y = static_cast<std::size_t>(static_cast<double>(height) * 0.1);
  const auto max_x = static_cast<std::size_t>(static_cast<double>(width) * 0.1);
  d.shift_y = static_cast<int>(uniform_index(rng, 2 * max_y + 1)) - static_cast<int>(max_y);
  d.shift_x = static_cast<int>(uniform_index(rng, 2 * max_x + 1)) - static_cast<int>(max_x);
  return d;
}

void apply_augment(std::span<float> image, const Shape& chw, const AugmentDraw& draw) {
  if (chw.size() != 3 || image.size() != numel(chw)) {
    throw ShapeError("augment: image of " + std::to_string(image.size()) + " values does not match " + to_string(chw));
  }
  const std::size_t c = chw[0];
  const long h = static_cast<long>(chw[1]), w = static_cast<long>(chw[2]);
  std::vector<float> src(image.begin(), image.end());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* plane = src.data() + ch * static_cast<std::size_t>(h * w);
    float* dst = image.data() + ch * static_cast<std::size_t>(h * w);
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        const long sy = y - draw.shift_y;
        long sx = x - draw.shift_x;
        float v = 0.0f;
        if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
          if (draw.flip) sx = w - 1 - sx;
          v = plane[sy * w + sx];
        }
        dst[y * w + x] = v;
      }
    }
  }
}

void augment(std::span<float> image, const Shape& chw, Rng& rng) {
  apply_augment(image, chw, draw_augment(rng, chw.at(1), chw.at(2)));
}

EventStream read_event_file(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 16) throw DataError(path.string() + ": file shorter than the 16-byte header");
  if (read_le<std::uint32_t>(bytes.data()) != kEventMagic) throw DataError(path.string() + ": bad magic at byte offset 0");
  const auto width = read_le<std::uint32_t>(bytes.data() + 4);
  const auto height = read_le<std::uint32_t>(bytes.data() + 8);
  const auto count = read_le<std::uint32_t>(bytes.data() + 12);
  if (width == 0 || height == 0 || width > 0xffff || height > 0xffff) {
    throw DataError(path.string() + ": invalid sensor size " + std::to_string(width) + "x" + std::to_string(height));
  }
  if (bytes.size() != 16 + static_cast<std::size_t>(count) * 9) {
    throw DataError(path.string() + ": header announces " + std::to_string(count) + " events but file holds " +
                    std::to_string(bytes.size()) + " bytes");
  }
  EventStream s;
  s.width = static_cast<std::uint16_t>(width);
  s.height = static_cast<std::uint16_t>(height);
  s.events.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* p = bytes.data() + 16 + i * 9;
    EventRecord& e = s.events[i];
    e.t = read_le<std::uint32_t>(p);
    e.x = read_le<std::uint16_t>(p + 4);
    e.y = read_le<std::uint16_t>(p + 6);
    e.polarity = p[8];
    auto where = [&] { return path.string() + ": event " + std::to_string(i) + " at byte offset " + std::to_string(16 + i * 9); };
    if (e.x >= s.width || e.y >= s.height) throw DataError(where() + " lies outside the sensor");
    if (e.polarity > 1) throw DataError(where() + " has polarity " + std::to_string(e.polarity));
    if (i > 0 && e.t < s.events[i - 1].t) throw DataError(where() + " is out of time order");
  }
  return s;
}

void write_event_file(const fs::path& path, const EventStream& stream) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + stream.events.size() * 9);
  write_le<std::uint32_t>(out, kEventMagic);
  write_le<std::uint32_t>(out, stream.width);
  write_le<std::uint32_t>(out, stream.height);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(stream.events.size()));
  for (const auto& e : stream.events) {
    write_le<std::uint32_t>(out, e.t);
    write_le<std::uint16_t>(out, e.x);
    write_le<std::uint16_t>(out, e.y);
    out.push_back(e.polarity);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

std::vector<std::size_t> count_slice_sizes(std::size_t n, std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("events_to_frames: steps must be at least 1");
  std::vector<std::size_t> sizes(steps, n / steps);
  for (std::size_t i = 0; i < n % steps; ++i) ++sizes[i];
  return sizes;
}

FrameSequence events_to_frames(std::span<const EventRecord> events, std::size_t steps, std::size_t height,
                               std::size_t width, EventSlicing slicing) {
  if (steps == 0) throw std::invalid_argument("events_to_frames: steps must be at least 1");
  FrameSequence f{steps, height, width, std::vector<float>(steps * 2 * height * width, 0.0f)};
  if (events.empty()) return f;
  auto deposit = [&](std::size_t slice, const EventRecord& e) {
    if (e.x >= width || e.y >= height) {
      throw std::out_of_range("events_to_frames: event at (" + std::to_string(e.x) + ", " + std::to_string(e.y) +
                              ") outside " + std::to_string(width) + "x" + std::to_string(height));
    }
    const std::size_t channel = e.polarity ? 1 : 0;
    f.counts[((slice * 2 + channel) * height + e.y) * width + e.x] += 1.0f;
  };
  if (slicing == EventSlicing::Count) {
    std::size_t i = 0;
    const auto sizes = count_slice_sizes(events.size(), steps);
    for (std::size_t s = 0; s < steps; ++s)
      for (std::size_t k = 0; k < sizes[s]; ++k) deposit(s, events[i++]);
  } else {
    const std::uint64_t t0 = events.front().t;
    const std::uint64_t span = static_cast<std::uint64_t>(events.back().t) - t0 + 1;
    for (const auto& e : events) deposit(static_cast<std::size_t>((e.t - t0) * steps / span), e);
  }
  return f;
}

Dataset load_event_dataset(const fs::path& split_dir, std::size_t steps, EventSlicing slicing, std::size_t limit) {
  if (!fs::is_directory(split_dir)) throw DataError("event dataset directory not found: " + split_dir.string());
  std::vector<std::pair<int, fs::path>> classes;
  for (const auto& entry : fs::directory_iterator(split_dir)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    char* end = nullptr;
    const long label = std::strtol(name.c_str(), &end, 10);
    if (name.empty() || *end != '\0' || label < 0) throw DataError("event class directory '" + name + "' is not a class index");
    classes.emplace_back(static_cast<int>(label), entry.path());
  }
  std::sort(classes.begin(), classes.end());
  std::vector<std::pair<int, fs::path>> files;
  for (const auto& [label, dir] : classes) {
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().extension() == ".evt") paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (auto& p : paths) files.emplace_back(label, std::move(p));
  }
  Dataset out;
  out.frames = true;
  bool first = true;
  for (const auto& [label, path] : files) {
    if (limit != 0 && out.size() >= limit) break;
    const EventStream s = read_event_file(path);
    if (first) {
      out.sample_shape = {steps, 2, s.height, s.width};
      first = false;
    } else if (out.sample_shape[2] != s.height || out.sample_shape[3] != s.width) {
      throw DataError(path.string() + ": sensor size differs from the rest of the dataset");
    }
    const FrameSequence f = events_to_frames(s.events, steps, s.height, s.width, slicing);
    out.values.insert(out.values.end(), f.counts.begin(), f.counts.end());
    out.labels.push_back(label);
  }
  if (first) out.sample_shape = {steps, 2, 1, 1};
  return out;
}

Dataset synth_dataset(std::size_t n, std::size_t classes, std::uint64_t seed, const Shape& shape) {
  if (classes == 0) throw std::invalid_argument("synth_dataset: classes must be positive");
  if (shape.size() != 3) throw ShapeError("synth_dataset: shape must be [c, h, w], got " + to_string(shape));
  // Prototypes depend only on the class index so every seed samples the
  // same classes; the seed drives the pixel noise.
  Rng proto_rng(0x9b0c5a1e);
  Rng rng(seed);
  const std::size_t c = shape[0], h = shape[1], w = shape[2], plane = h * w;
  std::vector<float> prototypes(classes * c * plane);
  for (std::size_t k = 0; k < classes; ++k) {
    const double cy = (0.2 + 0.6 * uniform01(proto_rng)) * static_cast<double>(h);
    const double cx = (0.2 + 0.6 * uniform01(proto_rng)) * static_cast<double>(w);
    const double sigma = 0.15 * static_cast<double>(std::max(h, w));
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double amplitude = 0.3 + 0.7 * uniform01(proto_rng);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          prototypes[(k * c + ch) * plane + y * w + x] =
              static_cast<float>(amplitude * std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma)));
        }
    }
  }
  Dataset out;
  out.sample_shape = shape;
  out.values.resize(n * c * plane);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    out.labels[i] = static_cast<int>(k);
    const float* proto = prototypes.data() + k * c * plane;
    float* dst = out.values.data() + i * c * plane;
    for (std::size_t j = 0; j < c * plane; ++j) {
      dst[j] = std::clamp(static_cast<float>(proto[j] + 0.1 * standard_normal(rng)), 0.0f, 1.0f);
    }
  }
  return out;
}

template <typename T>
Tensor<T> make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  const std::size_t b = indices.size();
  const std::size_t n = data.sample_size();
  std::vector<T> values(b * n);
  for (std::size_t i : indices) {
    if (i >= data.size()) throw std::out_of_range("make_batch: index " + std::to_string(i) + " beyond dataset");
  }
  if (!data.frames) {
    for (std::size_t j = 0; j < b; ++j) {
      auto s = data.sample(indices[j]);
      std::copy(s.begin(), s.end(), values.begin() + static_cast<std::ptrdiff_t>(j * n));
    }
    Shape shape{b};
    shape.insert(shape.end(), data.sample_shape.begin(), data.sample_shape.end());
    return Tensor<T>(shape, std::move(values));
  }
  const std::size_t steps = data.sample_shape[0];
  const std::size_t frame = n / steps;
  for (std::size_t j = 0; j < b; ++j) {
    auto s = data.sample(indices[j]);
    for (std::size_t t = 0; t < steps; ++t) {
      std::copy(s.begin() + static_cast<std::ptrdiff_t>(t * frame), s.begin() + static_cast<std::ptrdiff_t>((t + 1) * frame),
                values.begin() + static_cast<std::ptrdiff_t>((t * b + j) * frame));
    }
  }
  Shape shape{steps, b};
  shape.insert(shape.end(), data.sample_shape.begin() + 1, data.sample_shape.end());
  return Tensor<T>(shape, std::move(values));
}

std::vector<int> batch_labels(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data.labels.at(i));
  return out;
}

fs::path resolve_data_root(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("MTSNN_DATA"); env && *env) return env;
  return "data";
}

template Tensor<float> make_batch(const Dataset&, std::span<const std::size_t>);
template Tensor<double> make_batch(const Dataset&, std::span<const std::size_t>);

}  // namespace mtsnn
