#pragma once

// Datasets: CIFAR-10 binary batches, event-camera streams sliced into frame
// sequences, and synthetic Gaussian-blob images for quick experiments.
//
// A Dataset stores samples contiguously. Static images have sample_shape
// [c, h, w]; frame sequences have [steps, c, h, w] and are fed to the model
// one frame per step.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mtsnn/config.hpp"
#include "mtsnn/rng.hpp"
#include "mtsnn/tensor.hpp"

namespace mtsnn {

/// Malformed input file; the message names the file and byte offset.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  Shape sample_shape{3, 32, 32};
  bool frames = false;  // samples are [steps, c, h, w] sequences
  std::vector<float> values;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return numel(sample_shape); }
  std::span<const float> sample(std::size_t i) const;
  std::span<float> sample(std::size_t i);

  /// First n samples (all when n is 0 or larger than the dataset).
  Dataset head(std::size_t n) const;
};

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// Parses CIFAR-10 binary records. `source` names the data in errors.
Dataset parse_cifar10(std::span<const std::uint8_t> bytes, const std::string& source);
Dataset load_cifar10_binary(const std::filesystem::path& path);
/// Inverse of parse_cifar10 for values that are multiples of 1/255.
std::vector<std::uint8_t> serialize_cifar10(const Dataset& data);

struct CifarSplits {
  Dataset train, test;
};
/// data_batch_1..5.bin and test_batch.bin under `root` or
/// `root`/cifar-10-batches-bin. A limit of 0 keeps every record.
CifarSplits load_cifar10(const std::filesystem::path& root, std::size_t train_limit, std::size_t test_limit);

/// Random flip and shift drawn for one image.
struct AugmentDraw {
  bool flip = false;
  int shift_y = 0;
  int shift_x = 0;
};

/// Flip with probability 0.5; integer shifts up to 10% of each side.
AugmentDraw draw_augment(Rng& rng, std::size_t height, std::size_t width);
/// Applies a draw to one [c, h, w] image in place; vacated pixels become 0.
void apply_augment(std::span<float> image, const Shape& chw, const AugmentDraw& draw);
void augment(std::span<float> image, const Shape& chw, Rng& rng);

struct EventRecord {
  std::uint32_t t = 0;  // microseconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t polarity = 0;
  bool operator==(const EventRecord&) const = default;
};

struct EventStream {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<EventRecord> events;
};

inline constexpr std::uint32_t kEventMagic = 0x5456454d;  // "MEVT"

/// 16-byte header (magic, width, height, count as u32 LE) then 9-byte
/// records (u32 t, u16 x, u16 y, u8 polarity), little-endian.
EventStream read_event_file(const std::filesystem::path& path);
void write_event_file(const std::filesystem::path& path, const EventStream& stream);

struct FrameSequence {
  std::size_t steps = 0, height = 0, width = 0;
  std::vector<float> counts;  // [steps, 2, height, width]
};

/// Sizes of T contiguous slices of n events; earlier slices take the remainder.
std::vector<std::size_t> count_slice_sizes(std::size_t n, std::size_t steps);

/// Accumulates a time-sorted stream into per-polarity count frames. Count
/// slicing splits by event count; time slicing splits [t_first, t_last] into
/// equal windows.
FrameSequence events_to_frames(std::span<const EventRecord> events, std::size_t steps, std::size_t height,
                               std::size_t width, EventSlicing slicing = EventSlicing::Count);

/// root/<split>/<class index>/*.evt, classes in numeric order.
Dataset load_event_dataset(const std::filesystem::path& split_dir, std::size_t steps, EventSlicing slicing,
                           std::size_t limit);

/// Per-class Gaussian-blob prototypes (fixed per class index) plus seeded
/// pixel noise, clipped to [0, 1].
Dataset synth_dataset(std::size_t n, std::size_t classes, std::uint64_t seed, const Shape& shape = {3, 32, 32});

/// Stacks samples into a model input: [batch, c, h, w] for images,
/// [steps, batch, c, h, w] for frame sequences.
template <typename T>
Tensor<T> make_batch(const Dataset& data, std::span<const std::size_t> indices);

std::vector<int> batch_labels(const Dataset& data, std::span<const std::size_t> indices);

/// Resolves the data root: explicit value, else $MTSNN_DATA, else "data".
std::filesystem::path resolve_data_root(const std::string& configured);

}  // namespace mtsnn
