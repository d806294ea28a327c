#pragma once

#include <cstdint>
#include <vector>

#include "mstr/config.hpp"
#include "mstr/metrics.hpp"
#include "mstr/trainer.hpp"

namespace mstr {

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  double best_val_wa = 0.0;
  ModelParams<float> best_params;
  EvalMetrics test;
};

struct SyntheticRunResult {
  std::vector<HistoryRow> history;
  std::vector<SeedOutcome> seeds;
};

/// One independent run per training seed s: the synthetic dataset is drawn
/// with seed s and padded for the model's (p, L), one model is trained from
/// init seed s, and its best-validation parameters are scored on the test split.
SyntheticRunResult run_synthetic_seeds(const RunConfig& config, const EpochCallback& on_epoch = {});

/// Median of the seeds' test WA.
double median_test_wa(const SyntheticRunResult& result);

}  // namespace mstr
