#include "mtsnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mtsnn {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'S', 'N', 'N', 'C', 'K', 'P'};

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& data, const std::string& source) : data_(data), source_(source) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }
  std::size_t offset() const { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError(source_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) {
    if (data_.size() - pos_ < n) fail("unexpected end of data");
  }

  const std::vector<std::uint8_t>& data_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::add_tensor(std::string name, Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size()) {
    throw ShapeError("checkpoint entry '" + name + "': shape " + to_string(shape) + " holds " +
                     std::to_string(numel(shape)) + " values, got " + std::to_string(values.size()));
  }
  entries_.push_back({std::move(name), CheckpointEntry::Kind::Tensor, std::move(shape), std::move(values), {}});
}

void Checkpoint::add_bytes(std::string name, std::string bytes) {
  entries_.push_back({std::move(name), CheckpointEntry::Kind::Bytes, {}, {}, std::move(bytes)});
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw CheckpointError("checkpoint has no entry '" + name + "'");
}

const std::string& Checkpoint::bytes(const std::string& name) const {
  const auto& e = at(name);
  if (e.kind != CheckpointEntry::Kind::Bytes) throw CheckpointError("checkpoint entry '" + name + "' is not a byte blob");
  return e.bytes;
}

std::vector<std::uint8_t> Checkpoint::encode() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.kind));
    if (e.kind == CheckpointEntry::Kind::Tensor) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
      for (auto d : e.shape) put<std::uint64_t>(out, d);
      for (double v : e.values) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    } else {
      put<std::uint64_t>(out, e.bytes.size());
      out.insert(out.end(), e.bytes.begin(), e.bytes.end());
    }
  }
  return out;
}

Checkpoint Checkpoint::decode(const std::vector<std::uint8_t>& data, const std::string& source) {
  if (data.empty()) throw CheckpointError(source + ": empty checkpoint");
  Reader r(data, source);
  if (r.take(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw CheckpointError(source + ": not a checkpoint (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  Checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.take(name_len);
    const auto kind = r.get<std::uint8_t>();
    if (kind == 0) {
      const auto rank = r.get<std::uint32_t>();
      if (rank > 16) r.fail("implausible rank " + std::to_string(rank) + " for '" + name + "'");
      Shape shape(rank);
      for (auto& d : shape) d = r.get<std::uint64_t>();
      const std::size_t n = numel(shape);
      if (n > (data.size() - r.offset()) / 8) r.fail("tensor '" + name + "' extends past the end of data");
      std::vector<double> values(n);
      for (auto& v : values) v = std::bit_cast<double>(r.get<std::uint64_t>());
      ck.add_tensor(std::move(name), std::move(shape), std::move(values));
    } else if (kind == 1) {
      const auto len = r.get<std::uint64_t>();
      if (len > data.size() - r.offset()) r.fail("blob '" + name + "' extends past the end of data");
      ck.add_bytes(std::move(name), r.take(static_cast<std::size_t>(len)));
    } else {
      r.fail("unknown entry kind " + std::to_string(kind));
    }
  }
  if (!r.done()) r.fail("trailing bytes");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto data = encode();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw CheckpointError("cannot write " + tmp);
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!f) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(data, path.string());
}

}  // namespace mtsnn
