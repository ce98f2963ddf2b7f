#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "mtsnn/checkpoint.hpp"

using namespace mtsnn;
namespace fs = std::filesystem;

namespace {

Checkpoint sample() {
  Checkpoint ck;
  ck.add_tensor("w", {2, 2}, {1.0, -0.1, std::numeric_limits<double>::denorm_min(), 1e300});
  ck.add_bytes("config", "[model]\nsteps = 2\n");
  ck.add_tensor("empty", {0}, {});
  return ck;
}

}  // namespace

TEST(Checkpoint, EncodeDecodeIsExact) {
  const Checkpoint back = Checkpoint::decode(sample().encode(), "memory");
  ASSERT_EQ(back.entries().size(), 3u);
  EXPECT_EQ(back.at("w").shape, (Shape{2, 2}));
  EXPECT_EQ(back.at("w").values, sample().at("w").values);
  EXPECT_EQ(back.bytes("config"), "[model]\nsteps = 2\n");
  EXPECT_TRUE(back.contains("empty"));
}

TEST(Checkpoint, RejectsCorruptInput) {
  EXPECT_THROW(Checkpoint::decode({}, "empty"), CheckpointError);
  auto bytes = sample().encode();
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(Checkpoint::decode(bad_magic, "m"), CheckpointError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(Checkpoint::decode(truncated, "t"), CheckpointError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(Checkpoint::decode(trailing, "x"), CheckpointError);
}

TEST(Checkpoint, MissingEntryThrows) { EXPECT_THROW(sample().at("nope"), CheckpointError); }

TEST(Checkpoint, FileRoundTrip) {
  const fs::path path = fs::temp_directory_path() / "mtsnn-checkpoint-test.ckpt";
  sample().save(path);
  EXPECT_EQ(Checkpoint::load(path).encode(), sample().encode());
  fs::remove(path);
  EXPECT_THROW(Checkpoint::load(path), CheckpointError);
}
