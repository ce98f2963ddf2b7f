#pragma once

// Checkpoint container, little-endian:
//
//   "MTSNNCKP"  u32 version  u32 entry_count
//   per entry:  u32 name_len, name bytes, u8 kind,
//               kind 0 (tensor): u32 rank, rank x u64 dims, f64 values
//               kind 1 (bytes):  u64 length, raw bytes

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtsnn/tensor.hpp"

namespace mtsnn {

/// Unreadable or malformed checkpoint.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  enum class Kind : std::uint8_t { Tensor = 0, Bytes = 1 };
  std::string name;
  Kind kind = Kind::Tensor;
  Shape shape;
  std::vector<double> values;
  std::string bytes;
};

class Checkpoint {
 public:
  void add_tensor(std::string name, Shape shape, std::vector<double> values);
  void add_bytes(std::string name, std::string bytes);

  bool contains(const std::string& name) const;
  const CheckpointEntry& at(const std::string& name) const;
  const std::string& bytes(const std::string& name) const;
  const std::vector<CheckpointEntry>& entries() const { return entries_; }

  std::vector<std::uint8_t> encode() const;
  static Checkpoint decode(const std::vector<std::uint8_t>& data, const std::string& source);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<CheckpointEntry> entries_;
};

}  // namespace mtsnn
