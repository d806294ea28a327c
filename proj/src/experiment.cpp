#include "mstr/experiment.hpp"

#include <algorithm>

#include "mstr/errors.hpp"

namespace mstr {

SyntheticRunResult run_synthetic_seeds(const RunConfig& config, const EpochCallback& on_epoch) {
  const MstrConfig model = config.model_config();
  const TrainConfig base = config.train_config();
  model.validate();
  base.validate();
  const std::size_t levels = model.variant == Variant::kMstr ? model.levels : 0;

  SyntheticRunResult out;
  for (const std::uint64_t seed : base.seeds) {
    const Dataset ds = generate_synthetic_dataset(config.data_spec(), seed, model.p, levels);
    TrainConfig one = base;
    one.seeds = {seed};
    auto result = train(model, one, ds, on_epoch);
    out.history.insert(out.history.end(), result.history.begin(), result.history.end());
    auto& run = result.runs.front();
    EvalMetrics test = evaluate(run.best_params, model, ds.test, model.num_classes);
    out.seeds.push_back({seed, run.best_epoch, run.best_val_wa, std::move(run.best_params), std::move(test)});
  }
  return out;
}

double median_test_wa(const SyntheticRunResult& result) {
  if (result.seeds.empty()) throw EmptyInputError("median_test_wa: no seeds");
  std::vector<double> wa;
  for (const auto& s : result.seeds) wa.push_back(s.test.wa);
  std::sort(wa.begin(), wa.end());
  const std::size_t n = wa.size();
  return n % 2 == 1 ? wa[n / 2] : 0.5 * (wa[n / 2 - 1] + wa[n / 2]);
}

}  // namespace mstr
