#include "mstr/trainer.hpp"

#include <cmath>
#include <exception>
#include <iomanip>
#include <sstream>

#include "mstr/ops.hpp"

namespace mstr {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

std::vector<Tensor<float>*> parameter_pointers(ModelParams<float>& params) {
  std::vector<Tensor<float>*> out;
  params.for_each([&out](Tensor<float>& t) { out.push_back(&t); });
  return out;
}

struct SampleGradient {
  double loss = 0.0;
  std::vector<Tensor<float>> grads;
};

SampleGradient sample_gradient(const ModelParams<float>& params, const MstrConfig& config,
                               const Sample& sample, const ForwardContext& ctx) {
  Tape<float> tape;
  const auto vars = bind_model(tape, params);
  Var<float> logits = model_forward(tape, sample.features, sample.valid_len, vars, config, ctx);
  Var<float> loss = cross_entropy(logits, sample.label);
  tape.backward(loss);
  SampleGradient out;
  out.loss = loss.value()[0];
  out.grads.reserve(vars.flat.size());
  for (const auto& v : vars.flat) out.grads.push_back(tape.grad(v.id));
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid train config: " + msg); };
  if (epochs == 0) fail("epochs must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (seeds.empty()) fail("at least one seed is required");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must lie in [0, 1)");
  if (!(adam_eps >= 0.0)) fail("adam_eps must be >= 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
}

template <typename T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
               AdamState<T>& state, const AdamOptions& options, std::uint64_t t) {
  if (t == 0) throw ContractError("adam_step: step counter starts at 1");
  if (params.size() != grads.size()) {
    throw ContractError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                        std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: state size mismatch");
  const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& g = grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (!p.same_shape(g) || !p.same_shape(m)) {
      throw ContractError("adam_step: tensor " + std::to_string(i) + " shape " + p.shape() +
                          " disagrees with gradient " + g.shape() + " or state " + m.shape());
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = options.beta1 * m[j] + (1.0 - options.beta1) * gj;
      const double vj = options.beta2 * v[j] + (1.0 - options.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = options.learning_rate * (mj / c1) / (std::sqrt(vj / c2) + options.eps);
      p[j] = static_cast<T>(p[j] - update);
    }
  }
}

template void adam_step<float>(std::span<Tensor<float>* const>, std::span<const Tensor<float>>,
                               AdamState<float>&, const AdamOptions&, std::uint64_t);
template void adam_step<double>(std::span<Tensor<double>* const>, std::span<const Tensor<double>>,
                                AdamState<double>&, const AdamOptions&, std::uint64_t);

double mean_loss(const ModelParams<float>& params, const MstrConfig& config,
                 std::span<const Sample> samples) {
  if (samples.empty()) throw EmptyInputError("mean_loss: no samples");
  double total = 0.0;
  for (const auto& s : samples) {
    Tape<float> tape;
    const auto vars = bind_model(tape, params);
    auto logits = model_forward(tape, s.features, s.valid_len, vars, config);
    total += cross_entropy(logits, s.label).value()[0];
  }
  return total / static_cast<double>(samples.size());
}

std::vector<std::size_t> predict(const ModelParams<float>& params, const MstrConfig& config,
                                 std::span<const Sample> samples) {
  std::vector<std::size_t> preds(samples.size());
  const auto n = static_cast<std::int64_t>(samples.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const auto& s = samples[static_cast<std::size_t>(i)];
      preds[static_cast<std::size_t>(i)] =
          argmax(predict_logits(s.features, s.valid_len, params, config));
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return preds;
}

EvalMetrics evaluate(const ModelParams<float>& params, const MstrConfig& config,
                     std::span<const Sample> samples, std::size_t num_classes) {
  const auto preds = predict(params, config, samples);
  std::vector<std::size_t> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  return compute_metrics(preds, labels, num_classes);
}

EvalMetrics evaluate(const Checkpoint& checkpoint, const Dataset& dataset, Split split) {
  const auto& c = checkpoint.config;
  if (c.input_dim != dataset.input_dim) {
    throw ConfigError("checkpoint expects input_dim " + std::to_string(c.input_dim) +
                      " but the dataset has " + std::to_string(dataset.input_dim));
  }
  if (c.num_classes < dataset.num_classes) {
    throw ConfigError("checkpoint predicts " + std::to_string(c.num_classes) +
                      " classes but the dataset has " + std::to_string(dataset.num_classes));
  }
  const auto& samples = dataset.split(split);
  for (const auto& s : samples) {
    if (s.features.rows() % c.time_multiple() != 0) {
      throw ConfigError("dataset is padded to " + std::to_string(s.features.rows()) +
                        " frames, not a multiple of p^L = " + std::to_string(c.time_multiple()));
    }
  }
  return evaluate(checkpoint.params, c, samples, c.num_classes);
}

TrainResult train(const MstrConfig& model_config, const TrainConfig& train_config,
                  const Dataset& dataset, const EpochCallback& on_epoch) {
  model_config.validate();
  train_config.validate();
  if (dataset.train.empty()) throw EmptyInputError("train: training split is empty");
  if (dataset.input_dim != model_config.input_dim) {
    throw ConfigError("train: dataset input_dim " + std::to_string(dataset.input_dim) +
                      " does not match model input_dim " + std::to_string(model_config.input_dim));
  }
  if (dataset.num_classes > model_config.num_classes) {
    throw ConfigError("train: dataset has " + std::to_string(dataset.num_classes) +
                      " classes, model only " + std::to_string(model_config.num_classes));
  }
  const std::span<const Sample> train_set = dataset.train;
  const std::span<const Sample> val_set = dataset.val.empty() ? train_set : dataset.val;

  MstrConfig config = model_config;
  config.dropout_rate = train_config.dropout_rate;
  const AdamOptions adam{train_config.learning_rate, train_config.adam_beta1,
                         train_config.adam_beta2, train_config.adam_eps};

  TrainResult result;
  for (const std::uint64_t seed : train_config.seeds) {
    ModelParams<float> params = init_params<float>(config, seed);
    const auto ptrs = parameter_pointers(params);
    AdamState<float> state;
    std::uint64_t step = 0;
    SeedRun run{seed, params, 0, -1.0};

    for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
      const auto batches = batch_iter(train_set, train_config.batch_size, mix(seed, epoch));
      double epoch_loss = 0.0;
      for (std::size_t b = 0; b < batches.size(); ++b) {
        const auto& batch = batches[b];
        std::vector<SampleGradient> per_sample(batch.size());
        std::exception_ptr error;
        const auto n = static_cast<std::int64_t>(batch.size());
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
          try {
            const auto& sample = train_set[batch[static_cast<std::size_t>(i)]];
            std::mt19937_64 rng(mix(mix(seed, epoch), sample.id));
            ForwardContext ctx{true, config.dropout_rate, &rng};
            per_sample[static_cast<std::size_t>(i)] = sample_gradient(params, config, sample, ctx);
          } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
          }
        }
        if (error) std::rethrow_exception(error);

        // Reduce in ascending sample order so results do not depend on threads.
        std::vector<Tensor<float>> grads = per_sample.front().grads;
        double batch_loss = per_sample.front().loss;
        for (std::size_t s = 1; s < per_sample.size(); ++s) {
          batch_loss += per_sample[s].loss;
          for (std::size_t k = 0; k < grads.size(); ++k) {
            auto dst = grads[k].values();
            auto src = per_sample[s].grads[k].values();
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
          }
        }
        if (!std::isfinite(batch_loss)) {
          throw TrainingDiverged("loss diverged (non-finite) for seed " + std::to_string(seed) +
                                 " at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(b + 1));
        }
        const float inv = 1.0f / static_cast<float>(batch.size());
        for (auto& g : grads)
          for (auto& x : g.values()) x *= inv;
        adam_step<float>(ptrs, grads, state, adam, ++step);
        epoch_loss += batch_loss;
      }

      const EvalMetrics val = evaluate(params, config, val_set, config.num_classes);
      HistoryRow row{seed, epoch, epoch_loss / static_cast<double>(train_set.size()), val.wa,
                     val.ua, val.wf1};
      result.history.push_back(row);
      if (on_epoch) on_epoch(row);
      if (val.wa > run.best_val_wa) {
        run.best_val_wa = val.wa;
        run.best_epoch = epoch;
        run.best_params = params;
      }
    }
    result.runs.push_back(std::move(run));
  }
  return result;
}

std::string history_csv(std::span<const HistoryRow> rows) {
  std::ostringstream out;
  out << "seed,epoch,train_loss,val_wa,val_ua,val_wf1\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.seed << ',' << r.epoch << ',' << r.train_loss << ',' << r.val_wa << ',' << r.val_ua
        << ',' << r.val_wf1 << '\n';
  }
  return out.str();
}

}  // namespace mstr
