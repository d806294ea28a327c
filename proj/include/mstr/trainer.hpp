#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mstr/checkpoint.hpp"
#include "mstr/data.hpp"
#include "mstr/metrics.hpp"
#include "mstr/model.hpp"

namespace mstr {

struct TrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double dropout_rate = 0.0;

  void validate() const;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments, one pair per parameter tensor.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
};

/// One bias-corrected Adam update at step t (t >= 1). An empty state is
/// initialised to zero moments on first use.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
               AdamState<T>& state, const AdamOptions& options, std::uint64_t t);

struct HistoryRow {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_wa = 0.0, val_ua = 0.0, val_wf1 = 0.0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  ModelParams<float> best_params;
  std::size_t best_epoch = 0;
  double best_val_wa = -1.0;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  std::vector<SeedRun> runs;
};

using EpochCallback = std::function<void(const HistoryRow&)>;

/// Per-seed Adam training with mean cross-entropy over each batch. The
/// parameters with the best validation WA are kept for every seed.
TrainResult train(const MstrConfig& model_config, const TrainConfig& train_config,
                  const Dataset& dataset, const EpochCallback& on_epoch = {});

/// Mean cross-entropy of `params` over `samples` (no updates).
double mean_loss(const ModelParams<float>& params, const MstrConfig& config,
                 std::span<const Sample> samples);

std::vector<std::size_t> predict(const ModelParams<float>& params, const MstrConfig& config,
                                 std::span<const Sample> samples);

EvalMetrics evaluate(const ModelParams<float>& params, const MstrConfig& config,
                     std::span<const Sample> samples, std::size_t num_classes);

/// Checks that the checkpoint fits the dataset before evaluating one split.
EvalMetrics evaluate(const Checkpoint& checkpoint, const Dataset& dataset, Split split);

/// CSV with header seed,epoch,train_loss,val_wa,val_ua,val_wf1.
std::string history_csv(std::span<const HistoryRow> rows);

}  // namespace mstr
