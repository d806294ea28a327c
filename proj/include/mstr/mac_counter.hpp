#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace mstr {

/// Where a multiply-accumulate is attributed in a cost breakdown.
enum class MacComponent : std::uint8_t {
  kAttentionScores,
  kAttentionValues,
  kProjections,
  kFfn,
  kClassifier,
  kOther,
};

inline constexpr std::size_t kMacComponentCount = 6;

constexpr std::string_view to_string(MacComponent c) {
  switch (c) {
    case MacComponent::kAttentionScores: return "attention-scores";
    case MacComponent::kAttentionValues: return "attention-values";
    case MacComponent::kProjections: return "projections";
    case MacComponent::kFfn: return "ffn";
    case MacComponent::kClassifier: return "classifier";
    case MacComponent::kOther: return "other";
  }
  return "unknown";
}

/// Forward-pass MAC accumulator owned by a single tape. Ops add to whichever
/// component is current; ComponentScope switches it.
class MacCounter {
 public:
  void enable(bool on = true) noexcept { enabled_ = on; }
  bool enabled() const noexcept { return enabled_; }

  void add(std::uint64_t macs) noexcept {
    if (enabled_) counts_[static_cast<std::size_t>(current_)] += macs;
  }
  void add(MacComponent c, std::uint64_t macs) noexcept {
    if (enabled_) counts_[static_cast<std::size_t>(c)] += macs;
  }

  std::uint64_t count(MacComponent c) const noexcept {
    return counts_[static_cast<std::size_t>(c)];
  }
  std::uint64_t total() const noexcept {
    std::uint64_t t = 0;
    for (auto v : counts_) t += v;
    return t;
  }

  MacComponent current() const noexcept { return current_; }
  void set_current(MacComponent c) noexcept { current_ = c; }

  void reset() noexcept { counts_.fill(0); }

 private:
  bool enabled_ = false;
  MacComponent current_ = MacComponent::kOther;
  std::array<std::uint64_t, kMacComponentCount> counts_{};
};

class ComponentScope {
 public:
  ComponentScope(MacCounter& counter, MacComponent c) : counter_(counter), saved_(counter.current()) {
    counter_.set_current(c);
  }
  ~ComponentScope() { counter_.set_current(saved_); }
  ComponentScope(const ComponentScope&) = delete;
  ComponentScope& operator=(const ComponentScope&) = delete;

 private:
  MacCounter& counter_;
  MacComponent saved_;
};

}  // namespace mstr
