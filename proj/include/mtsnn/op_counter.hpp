#pragma once

// Scalar operation counting for forward kernels.
//
// Counting is active only inside an OpCounterScope on the current thread.
// Kernels report what they execute under a default tag (the op name); an
// OpTagScope re-attributes everything inside it to a caller-chosen tag.
//
// Conventions: a dot product of length K is K multiplications and K - 1
// additions; adding a bias is one more addition; thresholding is a comparison.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace mtsnn {

struct OpCount {
  std::uint64_t multiplications = 0;
  std::uint64_t additions = 0;
  std::uint64_t comparisons = 0;

  OpCount& operator+=(const OpCount& other) {
    multiplications += other.multiplications;
    additions += other.additions;
    comparisons += other.comparisons;
    return *this;
  }
  bool operator==(const OpCount&) const = default;
};

class OpCounts {
 public:
  void add(const std::string& tag, const OpCount& count) { by_tag_[tag] += count; }

  /// Count for one tag; zero if the tag never ran.
  OpCount at(const std::string& tag) const;
  OpCount total() const;
  const std::map<std::string, OpCount>& by_tag() const { return by_tag_; }

  OpCounts& operator+=(const OpCounts& other);

 private:
  std::map<std::string, OpCount> by_tag_;
};

/// Collects counts for its lifetime. Nesting on one thread throws.
class OpCounterScope {
 public:
  OpCounterScope();
  ~OpCounterScope();
  OpCounterScope(const OpCounterScope&) = delete;
  OpCounterScope& operator=(const OpCounterScope&) = delete;

  const OpCounts& counts() const { return counts_; }

 private:
  OpCounts counts_;
};

class OpTagScope {
 public:
  explicit OpTagScope(std::string tag);
  ~OpTagScope();
  OpTagScope(const OpTagScope&) = delete;
  OpTagScope& operator=(const OpTagScope&) = delete;

 private:
  std::string previous_;
  bool had_previous_;
};

bool op_counting_enabled();

void record_ops(std::string_view default_tag, std::uint64_t multiplications, std::uint64_t additions,
                std::uint64_t comparisons = 0);

}  // namespace mtsnn
