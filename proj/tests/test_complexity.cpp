#include <gtest/gtest.h>

#include <random>

#include "mstr/block.hpp"
#include "mstr/complexity.hpp"
#include "mstr/ops.hpp"
#include "test_util.hpp"

using namespace mstr;

namespace {

std::uint64_t ipow(std::uint64_t b, std::uint64_t e) {
  std::uint64_t r = 1;
  while (e-- > 0) r *= b;
  return r;
}

// p^2 F T (1 - p^-L) / (1 - p^-1) rearranged into exact integer arithmetic.
std::uint64_t closed_form_mstr(std::uint64_t T, std::uint64_t F, std::uint64_t p, std::uint64_t L) {
  return p * p * F * (T / ipow(p, L - 1)) * (ipow(p, L) - 1) / (p - 1);
}

// Counts window-local query/key products by enumerating every (level, window, i, j).
std::uint64_t enumerated_window_products(std::uint64_t T, std::uint64_t F, std::uint64_t p,
                                         std::uint64_t L) {
  std::uint64_t n = 0;
  for (std::uint64_t k = 0, len = T; k < L; ++k, len /= p)
    for (std::uint64_t w = 0; w < len / p; ++w)
      for (std::uint64_t i = 0; i < p; ++i)
        for (std::uint64_t j = 0; j < p; ++j) n += F;
  return n;
}

}  // namespace

TEST(AnalyticFlops, VanillaExamples) {
  EXPECT_EQ(analytic_flops_vtr(81, 8), 52488u);
  EXPECT_EQ(analytic_flops_vtr(1, 1), 1u);
  for (std::uint64_t F : {1u, 3u, 8u, 64u})
    for (std::uint64_t T : {5u, 81u, 100u}) EXPECT_EQ(analytic_flops_vtr(2 * T, F), 4 * analytic_flops_vtr(T, F));
}

TEST(AnalyticFlops, MstrExamples) {
  EXPECT_EQ(analytic_flops_mstr(81, 8, 3, 4), 8640u);
  EXPECT_EQ(analytic_flops_mstr(81, 8, 3, 4), (81u + 27u + 9u + 3u) * 9u * 8u);
  for (std::uint64_t T : {9u, 30u, 81u})
    EXPECT_EQ(analytic_flops_mstr(T, 5, 3, 1), T * 9 * 5);
  for (std::uint64_t T : {27u, 81u, 162u})
    EXPECT_EQ(analytic_flops_mstr(2 * T, 8, 3, 4), 2 * analytic_flops_mstr(T, 8, 3, 4));
  EXPECT_THROW(analytic_flops_mstr(80, 8, 3, 4), ConfigError);
}

TEST(AnalyticFlops, ClosedFormAgreesExactly) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t p = 2 + rng() % 4, L = 1 + rng() % 4, F = 1 + rng() % 64;
    const std::uint64_t T = ipow(p, L - 1) * (1 + rng() % 20);
    EXPECT_EQ(analytic_flops_mstr(T, F, p, L), closed_form_mstr(T, F, p, L));
  }
}

TEST(AnalyticFlops, MstrMonotoneInEveryArgument) {
  for (std::uint64_t p = 2; p <= 4; ++p)
    for (std::uint64_t L = 1; L <= 3; ++L)
      for (std::uint64_t F = 1; F <= 4; ++F) {
        const std::uint64_t T = ipow(p + 1, L) * ipow(p, L);  // divisible for p and p + 1
        const auto base = analytic_flops_mstr(T, F, p, L);
        EXPECT_LE(base, analytic_flops_mstr(2 * T, F, p, L));
        EXPECT_LE(base, analytic_flops_mstr(T, F + 1, p, L));
        EXPECT_LE(base, analytic_flops_mstr(T, F, p + 1, L));
        EXPECT_LE(base, analytic_flops_mstr(T, F, p, L + 1));
      }
}

TEST(EmpiricalMacs, RequiresEnabledCounter) {
  MacCounter counter;
  EXPECT_THROW(count_empirical_macs(counter), ContractError);
  counter.enable();
  EXPECT_EQ(count_empirical_macs(counter).total(), 0u);
}

TEST(EmpiricalMacs, VanillaMatchesQuadraticForm) {
  const auto b = count_attention_macs(Variant::kVanilla, 81, 8, 3, 4, 1);
  EXPECT_EQ(b[MacComponent::kAttentionScores], 52488u);
  EXPECT_EQ(b[MacComponent::kAttentionValues], 52488u);
  EXPECT_EQ(b.attention(), 104976u);
}

// Window-local products: each query meets p keys, so a level with t rows costs t * p * F.
TEST(EmpiricalMacs, MstrCountsEveryWindowProductOnce) {
  const auto b = count_attention_macs(Variant::kMstr, 81, 8, 3, 4, 1);
  EXPECT_EQ(b[MacComponent::kAttentionScores], enumerated_window_products(81, 8, 3, 4));
  EXPECT_EQ(b[MacComponent::kAttentionScores], 2880u);
  EXPECT_EQ(b[MacComponent::kAttentionValues], b[MacComponent::kAttentionScores]);
  // The analytic sum charges p^2 F per frame rather than per window.
  EXPECT_EQ(analytic_flops_mstr(81, 8, 3, 4), 3u * b[MacComponent::kAttentionScores]);
}

TEST(EmpiricalMacs, RandomGridMatchesAnalyticCounts) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t p = 2 + rng() % 3, L = 1 + rng() % 3, heads = 1 + rng() % 2;
    const std::size_t F = heads * (1 + rng() % 6);
    const std::size_t T = ipow(p, L) * (1 + rng() % 3);
    const auto v = count_attention_macs(Variant::kVanilla, T, F, p, L, heads);
    EXPECT_EQ(v[MacComponent::kAttentionScores], analytic_flops_vtr(T, F));
    const auto m = count_attention_macs(Variant::kMstr, T, F, p, L, heads);
    EXPECT_EQ(m[MacComponent::kAttentionScores], enumerated_window_products(T, F, p, L));
    EXPECT_EQ(m[MacComponent::kAttentionScores] * p, analytic_flops_mstr(T, F, p, L));
  }
}

TEST(EmpiricalMacs, HeadCountDoesNotChangeAttentionTotals) {
  for (std::size_t heads : {1u, 2u, 4u, 8u}) {
    EXPECT_EQ(count_attention_macs(Variant::kVanilla, 27, 8, 3, 3, heads).attention(),
              count_attention_macs(Variant::kVanilla, 27, 8, 3, 3, 1).attention());
    EXPECT_EQ(count_attention_macs(Variant::kMstr, 27, 8, 3, 3, heads).attention(),
              count_attention_macs(Variant::kMstr, 27, 8, 3, 3, 1).attention());
  }
}

TEST(EmpiricalMacs, PoolingAndUpsamplingAreFree) {
  Tape<float> tape;
  tape.counter().enable();
  auto x = tape.constant(Tensor<float>(81, 4, 1.0f));
  upsample_nearest_time(avg_pool_time(x, 3), 3);
  EXPECT_EQ(count_empirical_macs(tape.counter()).total(), 0u);
}

TEST(EmpiricalMacs, FullModelAttributesEveryComponent) {
  MstrConfig c;
  c.input_dim = 4;
  c.model_dim = 8;
  c.heads = 2;
  c.blocks = 1;
  c.num_classes = 3;
  const auto b = count_model_macs(c, 81);
  const std::uint64_t T = 81, F = 8;
  EXPECT_EQ(b[MacComponent::kProjections], T * 4 * F + 3 * T * F * F + T * F * F);
  EXPECT_EQ(b[MacComponent::kFfn], 2 * T * F * 4 * F);
  EXPECT_EQ(b[MacComponent::kClassifier], F * 4 + 4 * 2 + 2 * 3);
  EXPECT_EQ(b[MacComponent::kAttentionScores], count_attention_macs(Variant::kMstr, 81, 8, 3, 4, 2)[MacComponent::kAttentionScores]);
  EXPECT_EQ(b[MacComponent::kOther], 0u);
}

TEST(FlopsReport, AttentionOnlyReduction) {
  const auto r = flops_report(81, 8, 3, 4);
  EXPECT_EQ(r.analytic_vtr, 52488u);
  EXPECT_EQ(r.analytic_mstr, 8640u);
  EXPECT_NEAR(r.reduction_pct, 100.0 * (1.0 - 8640.0 / 52488.0), 1e-12);
  EXPECT_NEAR(r.reduction_pct, 83.54, 0.005);
  EXPECT_EQ(r.scope, FlopsScope::kAttentionOnly);
}

TEST(FlopsReport, FullModelScopeUsesCountedTotals) {
  MstrConfig c;
  c.input_dim = 4;
  c.model_dim = 8;
  c.heads = 2;
  c.blocks = 2;
  c.num_classes = 3;
  const auto r = full_model_flops_report(c, 81);
  EXPECT_EQ(r.scope, FlopsScope::kFullModel);
  EXPECT_LT(r.counted_mstr_macs, r.counted_vtr_macs);
  EXPECT_NEAR(r.reduction_pct, reduction_percent(r.counted_mstr_macs, r.counted_vtr_macs), 1e-12);
  EXPECT_GE(r.reduction_pct, 0.0);
  EXPECT_LT(r.reduction_pct, 100.0);
}

TEST(ScalingReport, FittedSlopes) {
  const std::vector<std::size_t> lengths{81, 162, 324};
  const auto rep = scaling_report(lengths, 8, 3, 4);
  EXPECT_GE(rep.vtr_slope, 1.95);
  EXPECT_LE(rep.vtr_slope, 2.05);
  EXPECT_GE(rep.mstr_slope, 0.95);
  EXPECT_LE(rep.mstr_slope, 1.05);
}

TEST(ScalingReport, ReductionStrictlyIncreasesWithLength) {
  const std::vector<std::size_t> lengths{81, 162, 243, 324, 648};
  const auto rep = scaling_report(lengths, 8, 3, 4);
  for (std::size_t i = 1; i < rep.rows.size(); ++i)
    EXPECT_GT(rep.rows[i].reduction_pct, rep.rows[i - 1].reduction_pct);
}

TEST(ScalingReport, PropagatesDivisibilityErrors) {
  const std::vector<std::size_t> lengths{81, 100};
  EXPECT_THROW(scaling_report(lengths, 8, 3, 4), ConfigError);
}

TEST(LoglogSlope, ExactPowerLaws) {
  const std::vector<double> x{1, 2, 4, 8};
  const std::vector<double> y{3, 24, 192, 1536};
  EXPECT_NEAR(loglog_slope(x, y), 3.0, 1e-12);
  EXPECT_THROW(loglog_slope(std::vector<double>{1}, std::vector<double>{1}), EmptyInputError);
}

TEST(FlopsCsv, ColumnsAndRows) {
  const std::vector<FlopsReport> rows{flops_report(81, 8, 3, 4)};
  const auto csv = flops_csv(rows);
  EXPECT_EQ(csv,
            "T,F,p,L,variant,analytic,counted,reduction_pct\n"
            "81,8,3,4,vanilla,52488,52488,0.00\n"
            "81,8,3,4,mstr,8640,2880,83.54\n");
  const auto table = flops_table(rows);
  EXPECT_NE(table.find("52488"), std::string::npos);
  EXPECT_NE(table.find("83.54"), std::string::npos);
}
