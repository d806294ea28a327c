#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mstr/mac_counter.hpp"
#include "mstr/model.hpp"

namespace mstr {

/// T^2 * F: per-side cost of global attention.
std::uint64_t analytic_flops_vtr(std::uint64_t T, std::uint64_t F);

/// Sum over k = 1..L of (T / p^(k-1)) * p^2 * F. Throws ConfigError unless
/// p^(L-1) divides T.
std::uint64_t analytic_flops_mstr(std::uint64_t T, std::uint64_t F, std::uint64_t p,
                                  std::uint64_t L);

/// Snapshot of a MacCounter split by component.
struct MacBreakdown {
  std::array<std::uint64_t, kMacComponentCount> by_component{};

  std::uint64_t operator[](MacComponent c) const {
    return by_component[static_cast<std::size_t>(c)];
  }
  std::uint64_t attention() const {
    return (*this)[MacComponent::kAttentionScores] + (*this)[MacComponent::kAttentionValues];
  }
  std::uint64_t total() const;
};

/// Reads a counter after a forward pass. Throws ContractError if the counter
/// was never enabled.
MacBreakdown count_empirical_macs(const MacCounter& counter);

/// Runs only the attention sublayer (pyramid plus windowed attention for
/// mstr, global attention for vanilla) on random Q/K/V with counting enabled.
MacBreakdown count_attention_macs(Variant variant, std::size_t T, std::size_t F, std::size_t p,
                                  std::size_t L, std::size_t heads = 1);

/// One full forward pass of a freshly initialised model on a T-frame input.
MacBreakdown count_model_macs(const MstrConfig& config, std::size_t T);

enum class FlopsScope : std::uint8_t { kAttentionOnly, kFullModel };
std::string_view to_string(FlopsScope s);

struct FlopsReport {
  std::size_t T = 0, F = 0, p = 0, L = 0;
  std::uint64_t analytic_vtr = 0;
  std::uint64_t analytic_mstr = 0;
  std::uint64_t counted_vtr_macs = 0;   // per side (scores only)
  std::uint64_t counted_mstr_macs = 0;  // per side (scores only)
  double reduction_pct = 0.0;
  FlopsScope scope = FlopsScope::kAttentionOnly;
};

/// 100 * (1 - mstr / vtr).
double reduction_percent(std::uint64_t mstr, std::uint64_t vtr);

/// Attention-only report; reduction_pct compares the analytic values.
FlopsReport flops_report(std::size_t T, std::size_t F, std::size_t p, std::size_t L,
                         std::size_t heads = 1);

/// Full-model report; counted fields hold whole-forward MAC totals and
/// reduction_pct compares those.
FlopsReport full_model_flops_report(const MstrConfig& config, std::size_t T);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

struct ScalingReport {
  std::vector<FlopsReport> rows;
  double vtr_slope = 0.0;   // fitted on counted per-side MACs
  double mstr_slope = 0.0;
};

ScalingReport scaling_report(std::span<const std::size_t> lengths, std::size_t F, std::size_t p,
                             std::size_t L, std::size_t heads = 1);

/// Header T,F,p,L,variant,analytic,counted,reduction_pct; two rows per report.
std::string flops_csv(std::span<const FlopsReport> rows);
/// Fixed-width text rendering of the same rows.
std::string flops_table(std::span<const FlopsReport> rows);

}  // namespace mstr
