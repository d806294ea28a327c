#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mstr/experiment.hpp"
#include "mstr/trainer.hpp"
#include "test_util.hpp"

using namespace mstr;

namespace {

MstrConfig tiny_model() {
  MstrConfig c;
  c.input_dim = 8;
  c.model_dim = 16;
  c.p = 3;
  c.levels = 2;
  c.heads = 2;
  c.blocks = 1;
  c.num_classes = 3;
  return c;
}

Dataset tiny_dataset(std::size_t per_class, std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.samples_per_class = per_class;
  return generate_synthetic_dataset(spec, seed, 3, 2);
}

struct Recount {
  double wa, ua, wf1;
};

// Per-sample recount without a confusion matrix.
Recount naive_metrics(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& label,
                      std::size_t C) {
  const double n = static_cast<double>(label.size());
  double correct = 0.0;
  for (std::size_t i = 0; i < label.size(); ++i) correct += pred[i] == label[i] ? 1.0 : 0.0;
  double recall_sum = 0.0, wf1 = 0.0;
  int supported = 0;
  for (std::size_t c = 0; c < C; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < label.size(); ++i) {
      if (pred[i] == c && label[i] == c) tp += 1;
      if (pred[i] == c && label[i] != c) fp += 1;
      if (pred[i] != c && label[i] == c) fn += 1;
    }
    const double support = tp + fn;
    if (support == 0) continue;
    ++supported;
    recall_sum += tp / support;
    const double f1 = tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    wf1 += f1 * support / n;
  }
  return {correct / n, recall_sum / supported, wf1};
}

}  // namespace

TEST(AdamStep, FirstStepMovesByLearningRateAgainstSign) {
  Tensor<double> x = Tensor<double>::from_rows({{1.0, -2.0, 0.5}});
  const Tensor<double> g = Tensor<double>::from_rows({{3.0, -0.01, 250.0}});
  std::vector<Tensor<double>*> params{&x};
  const std::vector<Tensor<double>> grads{g};
  AdamState<double> state;
  adam_step<double>(params, grads, state, AdamOptions{0.1, 0.9, 0.999, 0.0}, 1);
  EXPECT_NEAR(x[0], 0.9, 1e-12);
  EXPECT_NEAR(x[1], -1.9, 1e-12);
  EXPECT_NEAR(x[2], 0.4, 1e-12);
}

TEST(AdamStep, ZeroGradientLeavesParametersAndDecaysMoments) {
  Tensor<double> x = Tensor<double>::from_rows({{1.0, 2.0}});
  std::vector<Tensor<double>*> params{&x};
  AdamState<double> state;
  state.m.push_back(Tensor<double>::from_rows({{0.0, 0.0}}));
  state.v.push_back(Tensor<double>::from_rows({{0.0, 0.0}}));
  const std::vector<Tensor<double>> zero{Tensor<double>(1, 2)};
  adam_step<double>(params, zero, state, AdamOptions{}, 1);
  EXPECT_EQ(x, Tensor<double>::from_rows({{1.0, 2.0}}));

  state.m[0] = Tensor<double>::from_rows({{0.5, -0.5}});
  state.v[0] = Tensor<double>::from_rows({{0.25, 0.25}});
  adam_step<double>(params, zero, state, AdamOptions{}, 2);
  EXPECT_DOUBLE_EQ(state.m[0][0], 0.45);
  EXPECT_DOUBLE_EQ(state.v[0][0], 0.25 * 0.999);
}

TEST(AdamStep, MinimisesSquareMonotonically) {
  Tensor<double> x(1, 1, 1.0);
  std::vector<Tensor<double>*> params{&x};
  AdamState<double> state;
  double prev = 1.0;
  for (std::uint64_t t = 1; t <= 10; ++t) {
    const std::vector<Tensor<double>> g{Tensor<double>(1, 1, 2.0 * x[0])};
    adam_step<double>(params, g, state, AdamOptions{0.1, 0.9, 0.999, 1e-8}, t);
    EXPECT_LT(std::abs(x[0]), prev) << "step " << t;
    prev = std::abs(x[0]);
  }
}

TEST(AdamStep, ShapeMismatchIsContractError) {
  Tensor<double> x(2, 2);
  std::vector<Tensor<double>*> params{&x};
  AdamState<double> state;
  const std::vector<Tensor<double>> bad{Tensor<double>(1, 2)};
  EXPECT_THROW(adam_step<double>(params, bad, state, AdamOptions{}, 1), ContractError);
  const std::vector<Tensor<double>> good{Tensor<double>(2, 2)};
  EXPECT_THROW(adam_step<double>(params, good, state, AdamOptions{}, 0), ContractError);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  EXPECT_NO_THROW(t.validate());
  EXPECT_EQ(t.batch_size, 32u);
  EXPECT_EQ(t.seeds, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.learning_rate = -1;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.seeds.clear();
  EXPECT_THROW(t.validate(), ConfigError);
}

// Default architecture dims with an 8-wide input and three balanced classes.
TEST(Train, InitialLossIsNearLogC) {
  SyntheticSpec spec;
  spec.samples_per_class = 20;
  const auto ds = generate_synthetic_dataset(spec, 3, 3, 4);
  MstrConfig c;
  c.input_dim = 8;
  c.num_classes = 3;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    EXPECT_NEAR(mean_loss(init_params<float>(c, seed), c, ds.train), std::log(3.0), 0.2);
  }
}

TEST(Train, OverfitsOneBatch) {
  auto ds = tiny_dataset(10);
  std::vector<Sample> batch;
  for (std::size_t i : {0u, 1u, 2u, 8u, 9u, 10u, 16u, 17u}) batch.push_back(ds.train[i]);
  ds.train = batch;
  TrainConfig t;
  t.epochs = 200;
  t.batch_size = 8;
  t.learning_rate = 1e-2;
  t.seeds = {0};
  const auto result = train(tiny_model(), t, ds);
  ASSERT_EQ(result.history.size(), 200u);
  EXPECT_LT(result.history.back().train_loss, 0.05);
}

TEST(Train, SameSeedGivesIdenticalHistory) {
  const auto ds = tiny_dataset(10);
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 4;
  t.seeds = {1, 2};
  t.dropout_rate = 0.1;
  const auto a = train(tiny_model(), t, ds);
  const auto b = train(tiny_model(), t, ds);
  EXPECT_EQ(history_csv(a.history), history_csv(b.history));
  ASSERT_EQ(a.runs.size(), 2u);
  EXPECT_EQ(a.runs[0].best_params, b.runs[0].best_params);
  EXPECT_FALSE(a.runs[0].best_params == a.runs[1].best_params);
}

TEST(Train, HistoryAndBestCheckpointBookkeeping) {
  const auto ds = tiny_dataset(10);
  TrainConfig t;
  t.epochs = 4;
  t.batch_size = 8;
  t.seeds = {5};
  std::size_t calls = 0;
  const auto r = train(tiny_model(), t, ds, [&calls](const HistoryRow&) { ++calls; });
  EXPECT_EQ(calls, 4u);
  for (std::size_t e = 0; e < 4; ++e) {
    EXPECT_EQ(r.history[e].epoch, e + 1);
    EXPECT_EQ(r.history[e].seed, 5u);
    EXPECT_GE(r.history[e].val_wa, 0.0);
    EXPECT_LE(r.history[e].val_wa, 1.0);
  }
  double best = -1.0;
  for (const auto& row : r.history) best = std::max(best, row.val_wa);
  EXPECT_EQ(r.runs[0].best_val_wa, best);
  EXPECT_EQ(r.history[r.runs[0].best_epoch - 1].val_wa, best);
  EXPECT_EQ(evaluate(r.runs[0].best_params, tiny_model(), ds.val, 3).wa, best);
}

TEST(Train, DivergenceNamesEpochAndBatch) {
  auto ds = tiny_dataset(10);
  ds.train[0].features(0, 0) = std::numeric_limits<float>::infinity();
  TrainConfig t;
  t.epochs = 2;
  t.seeds = {0};
  try {
    train(tiny_model(), t, ds);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
  }
}

TEST(Train, RejectsMismatchedDataset) {
  const auto ds = tiny_dataset(5);
  auto c = tiny_model();
  c.input_dim = 4;
  EXPECT_THROW(train(c, TrainConfig{}, ds), ConfigError);
  Dataset empty;
  EXPECT_THROW(train(tiny_model(), TrainConfig{}, empty), EmptyInputError);
}

TEST(Evaluate, CheckpointMustMatchDataset) {
  const auto ds = tiny_dataset(5);
  auto c = tiny_model();
  c.input_dim = 6;
  const Checkpoint ckpt{c, init_params<float>(c, 0)};
  EXPECT_THROW(evaluate(ckpt, ds, Split::kTest), ConfigError);
  const Checkpoint ok{tiny_model(), init_params<float>(tiny_model(), 0)};
  const auto m = evaluate(ok, ds, Split::kTest);
  EXPECT_EQ(m.total(), ds.test.size());
  EXPECT_EQ(m.confusion.size(), 3u);
}

TEST(Metrics, PerfectPredictions) {
  const std::vector<std::size_t> y{0, 1, 2, 2, 1};
  const auto m = compute_metrics(y, y, 3);
  EXPECT_EQ(m.wa, 1.0);
  EXPECT_EQ(m.ua, 1.0);
  EXPECT_EQ(m.wf1, 1.0);
}

TEST(Metrics, HandCountedExample) {
  const std::vector<std::size_t> labels{0, 0, 0, 1};
  const std::vector<std::size_t> preds{0, 0, 0, 0};
  const auto m = compute_metrics(preds, labels, 2);
  EXPECT_DOUBLE_EQ(m.wa, 0.75);
  EXPECT_DOUBLE_EQ(m.ua, 0.5);
  EXPECT_EQ(m.confusion, (std::vector<std::vector<std::size_t>>{{3, 0}, {1, 0}}));
}

TEST(Metrics, MatchesNaiveRecount) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> p(300), y(300);
    for (auto& v : p) v = rng() % 6;
    for (auto& v : y) v = rng() % 6;
    const auto m = compute_metrics(p, y, 6);
    const auto r = naive_metrics(p, y, 6);
    EXPECT_NEAR(m.wa, r.wa, 1e-12);
    EXPECT_NEAR(m.ua, r.ua, 1e-12);
    EXPECT_NEAR(m.wf1, r.wf1, 1e-12);
    EXPECT_EQ(m.total(), 300u);
  }
}

TEST(Metrics, ZeroSupportClassesAreExcludedAndReported) {
  const std::vector<std::size_t> y{0, 0, 2, 2};
  const std::vector<std::size_t> p{0, 1, 2, 2};
  const auto m = compute_metrics(p, y, 4);
  EXPECT_EQ(m.zero_support_classes, (std::vector<std::size_t>{1, 3}));
  EXPECT_DOUBLE_EQ(m.ua, (0.5 + 1.0) / 2.0);
}

TEST(Metrics, BalancedSetsHaveEqualWaAndUa) {
  std::mt19937_64 rng(10);
  std::vector<std::size_t> y, p;
  for (std::size_t c = 0; c < 4; ++c)
    for (int i = 0; i < 25; ++i) {
      y.push_back(c);
      p.push_back(rng() % 4);
    }
  const auto m = compute_metrics(p, y, 4);
  EXPECT_NEAR(m.wa, m.ua, 1e-15);
}

TEST(Metrics, InvariantUnderLabelPermutation) {
  std::mt19937_64 rng(11);
  std::vector<std::size_t> p(200), y(200);
  for (auto& v : p) v = rng() % 5;
  for (auto& v : y) v = rng() % 5;
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<std::size_t> pp, yp;
  for (auto v : p) pp.push_back(perm[v]);
  for (auto v : y) yp.push_back(perm[v]);
  const auto a = compute_metrics(p, y, 5);
  const auto b = compute_metrics(pp, yp, 5);
  EXPECT_NEAR(a.wa, b.wa, 1e-15);
  EXPECT_NEAR(a.ua, b.ua, 1e-12);
  EXPECT_NEAR(a.wf1, b.wf1, 1e-12);
}

TEST(Metrics, Errors) {
  const std::vector<std::size_t> a{0, 1}, b{0};
  EXPECT_THROW(compute_metrics(a, b, 2), DimensionError);
  EXPECT_THROW(compute_metrics(std::vector<std::size_t>{}, std::vector<std::size_t>{}, 2),
               EmptyInputError);
  EXPECT_THROW(compute_metrics(a, std::vector<std::size_t>{0, 2}, 2), ContractError);
}

TEST(HistoryCsv, Header) {
  const std::vector<HistoryRow> rows{{0, 1, 1.5, 0.5, 0.25, 0.125}};
  EXPECT_EQ(history_csv(rows), "seed,epoch,train_loss,val_wa,val_ua,val_wf1\n0,1,1.5,0.5,0.25,0.125\n");
}

TEST(SyntheticSeeds, PairsDataAndInitSeedsAndIsDeterministic) {
  RunConfig cfg;
  cfg.seed = 4;
  cfg.num_seeds = 3;
  cfg.data.samples_per_class = 10;
  cfg.train.epochs = 2;
  cfg.model.model_dim = 8;
  cfg.model.heads = 2;
  const auto a = run_synthetic_seeds(cfg);
  const auto b = run_synthetic_seeds(cfg);
  ASSERT_EQ(a.seeds.size(), 3u);
  EXPECT_EQ(a.history.size(), 3u * cfg.train.epochs);
  std::vector<double> was;
  for (std::size_t i = 0; i < a.seeds.size(); ++i) {
    EXPECT_EQ(a.seeds[i].seed, 4u + i);
    EXPECT_EQ(a.seeds[i].test.wa, b.seeds[i].test.wa);
    EXPECT_TRUE(a.seeds[i].best_params == b.seeds[i].best_params);
    EXPECT_GE(a.seeds[i].best_epoch, 1u);
    EXPECT_LE(a.seeds[i].best_epoch, cfg.train.epochs);
    was.push_back(a.seeds[i].test.wa);
  }
  std::sort(was.begin(), was.end());
  EXPECT_EQ(median_test_wa(a), was[1]);

  RunConfig single = cfg;
  single.seed = 5;
  single.num_seeds = 1;
  const auto one = run_synthetic_seeds(single);
  EXPECT_EQ(one.seeds[0].test.wa, a.seeds[1].test.wa);
  EXPECT_TRUE(one.seeds[0].best_params == a.seeds[1].best_params);
}
