#include "mtsnn/op_counter.hpp"

#include <stdexcept>

namespace mtsnn {

namespace {
thread_local OpCounts* g_active = nullptr;
thread_local std::string g_tag;
thread_local bool g_has_tag = false;
}  // namespace

OpCount OpCounts::at(const std::string& tag) const {
  auto it = by_tag_.find(tag);
  return it == by_tag_.end() ? OpCount{} : it->second;
}

OpCount OpCounts::total() const {
  OpCount sum;
  for (const auto& [tag, count] : by_tag_) sum += count;
  return sum;
}

OpCounts& OpCounts::operator+=(const OpCounts& other) {
  for (const auto& [tag, count] : other.by_tag_) by_tag_[tag] += count;
  return *this;
}

OpCounterScope::OpCounterScope() {
  if (g_active) throw std::logic_error("op counter: nested counting scopes are not allowed");
  g_active = &counts_;
}

OpCounterScope::~OpCounterScope() { g_active = nullptr; }

OpTagScope::OpTagScope(std::string tag) : previous_(g_tag), had_previous_(g_has_tag) {
  g_tag = std::move(tag);
  g_has_tag = true;
}

OpTagScope::~OpTagScope() {
  g_tag = previous_;
  g_has_tag = had_previous_;
}

bool op_counting_enabled() { return g_active != nullptr; }

void record_ops(std::string_view default_tag, std::uint64_t multiplications, std::uint64_t additions,
                std::uint64_t comparisons) {
  if (!g_active) return;
  g_active->add(g_has_tag ? g_tag : std::string(default_tag), OpCount{multiplications, additions, comparisons});
}

}  // namespace mtsnn
