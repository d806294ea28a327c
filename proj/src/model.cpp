#include "mstr/model.hpp"

#include <cmath>
#include <random>
#include <string>

namespace mstr {

std::string_view to_string(Variant v) { return v == Variant::kMstr ? "mstr" : "vanilla"; }

Variant parse_variant(std::string_view s) {
  if (s == "mstr") return Variant::kMstr;
  if (s == "vanilla") return Variant::kVanilla;
  throw ConfigError("unknown model variant '" + std::string(s) + "' (expected mstr or vanilla)");
}

std::size_t MstrConfig::time_multiple() const {
  if (variant == Variant::kVanilla) return 1;
  std::size_t m = 1;
  for (std::size_t i = 0; i < levels; ++i) m *= p;
  return m;
}

void MstrConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid model config: " + msg); };
  if (input_dim == 0) fail("input_dim must be >= 1");
  if (model_dim == 0) fail("model_dim must be >= 1");
  if (heads == 0) fail("heads must be >= 1");
  if (model_dim % heads != 0) {
    fail("model_dim " + std::to_string(model_dim) + " is not divisible by heads " +
         std::to_string(heads));
  }
  if (blocks == 0) fail("blocks must be >= 1");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (classifier_hidden1() == 0 || classifier_hidden2() == 0) {
    fail("classifier widths resolve to zero; set fc1_width/fc2_width or raise model_dim");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
  if (variant == Variant::kMstr) {
    if (p < 2) fail("fractal factor p must be >= 2");
    if (levels == 0) fail("levels must be >= 1");
    double span = std::pow(static_cast<double>(p), static_cast<double>(levels));
    if (span > 1e9) fail("p^L exceeds supported sequence lengths");
  }
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

std::size_t parameter_count(const MstrConfig& c) {
  const std::size_t f = c.model_dim, ff = c.ffn_width();
  const std::size_t h1 = c.classifier_hidden1(), h2 = c.classifier_hidden2();
  const std::size_t block = 4 * f * f + f * ff + ff + ff * f + f + 4 * f;
  return c.input_dim * f + c.blocks * block + (f * h1 + h1) + (h1 * h2 + h2) +
         (h2 * c.num_classes + c.num_classes);
}

template <typename T>
ModelParams<T> init_params(const MstrConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](std::size_t fan_in, std::size_t fan_out) {
    const double limit = glorot_limit(fan_in, fan_out);
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor<T> w(fan_in, fan_out);
    for (auto& x : w.values()) x = static_cast<T>(dist(rng));
    return w;
  };
  const std::size_t f = config.model_dim, ff = config.ffn_width();
  const std::size_t h1 = config.classifier_hidden1(), h2 = config.classifier_hidden2();

  ModelParams<T> params{glorot(config.input_dim, f), {}, Tensor<T>(1, 1), Tensor<T>(1, h1),
                        Tensor<T>(1, 1), Tensor<T>(1, h2), Tensor<T>(1, 1),
                        Tensor<T>(1, config.num_classes)};
  for (std::size_t b = 0; b < config.blocks; ++b) {
    BlockParams<T> bp = BlockParams<T>::zeros(f, ff);
    bp.w_q = glorot(f, f);
    bp.w_k = glorot(f, f);
    bp.w_v = glorot(f, f);
    bp.w_o = glorot(f, f);
    bp.ffn_w1 = glorot(f, ff);
    bp.ffn_w2 = glorot(ff, f);
    params.blocks.push_back(std::move(bp));
  }
  params.fc1_w = glorot(f, h1);
  params.fc2_w = glorot(h1, h2);
  params.fc3_w = glorot(h2, config.num_classes);
  return params;
}

template <typename T>
ModelVars<T> bind_model(Tape<T>& tape, const ModelParams<T>& params) {
  ModelVars<T> vars;
  vars.input_proj = tape.parameter(params.input_proj);
  vars.flat.push_back(vars.input_proj);
  for (const auto& b : params.blocks) {
    vars.blocks.push_back(bind_block(tape, b));
    const auto& bv = vars.blocks.back();
    for (const Var<T>& v : {bv.w_q, bv.w_k, bv.w_v, bv.w_o, bv.ffn_w1, bv.ffn_b1, bv.ffn_w2,
                            bv.ffn_b2, bv.ln1_gamma, bv.ln1_beta, bv.ln2_gamma, bv.ln2_beta})
      vars.flat.push_back(v);
  }
  vars.fc1_w = tape.parameter(params.fc1_w);
  vars.fc1_b = tape.parameter(params.fc1_b);
  vars.fc2_w = tape.parameter(params.fc2_w);
  vars.fc2_b = tape.parameter(params.fc2_b);
  vars.fc3_w = tape.parameter(params.fc3_w);
  vars.fc3_b = tape.parameter(params.fc3_b);
  for (const Var<T>& v : {vars.fc1_w, vars.fc1_b, vars.fc2_w, vars.fc2_b, vars.fc3_w, vars.fc3_b})
    vars.flat.push_back(v);
  return vars;
}

template <typename T>
Tensor<T> sinusoidal_encoding(std::size_t rows, std::size_t width) {
  Tensor<T> pe(rows, width);
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t i = 0; i < width; ++i) {
      const double pair = static_cast<double>(i - i % 2);
      const double angle =
          static_cast<double>(t) / std::pow(10000.0, pair / static_cast<double>(width));
      pe(t, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
Var<T> model_forward(Tape<T>& tape, const Tensor<T>& features, std::size_t valid_len,
                     const ModelVars<T>& vars, const MstrConfig& config,
                     const ForwardContext& ctx) {
  if (valid_len == 0) throw EmptyInputError("model_forward: valid_len is zero");
  if (valid_len > features.rows()) {
    throw DimensionError("model_forward: valid_len " + std::to_string(valid_len) +
                         " exceeds the " + std::to_string(features.rows()) + " input frames");
  }
  if (features.cols() != config.input_dim) {
    throw DimensionError("model_forward: features " + features.shape() + " but input_dim is " +
                         std::to_string(config.input_dim));
  }
  if (features.rows() % config.time_multiple() != 0) {
    throw ConfigError("model_forward: " + std::to_string(features.rows()) +
                      " frames are not a multiple of p^L = " +
                      std::to_string(config.time_multiple()));
  }
  auto& counter = tape.counter();
  Var<T> x = tape.constant(features);
  {
    ComponentScope scope(counter, MacComponent::kProjections);
    x = matmul(x, vars.input_proj);
  }
  if (config.use_positional) {
    x = add(x, tape.constant(sinusoidal_encoding<T>(features.rows(), config.model_dim)));
  }
  for (const auto& block : vars.blocks) {
    x = config.variant == Variant::kMstr
            ? mstr_block_forward(x, block, config.p, config.levels, config.heads, ctx)
            : vanilla_block_forward(x, block, config.heads, ctx);
  }
  Var<T> pooled = mean_rows(x, valid_len);
  ComponentScope scope(counter, MacComponent::kClassifier);
  Var<T> h = gelu(add_bias(matmul(pooled, vars.fc1_w), vars.fc1_b));
  h = gelu(add_bias(matmul(h, vars.fc2_w), vars.fc2_b));
  return add_bias(matmul(h, vars.fc3_w), vars.fc3_b);
}

template <typename T>
Tensor<T> predict_logits(const Tensor<T>& features, std::size_t valid_len,
                         const ModelParams<T>& params, const MstrConfig& config) {
  Tape<T> tape;
  const auto vars = bind_model(tape, params);
  return model_forward(tape, features, valid_len, vars, config).value();
}

template <typename T>
std::size_t argmax(const Tensor<T>& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

#define MSTR_INSTANTIATE_MODEL(T)                                                         \
  template ModelParams<T> init_params<T>(const MstrConfig&, std::uint64_t);               \
  template ModelVars<T> bind_model<T>(Tape<T>&, const ModelParams<T>&);                   \
  template Tensor<T> sinusoidal_encoding<T>(std::size_t, std::size_t);                    \
  template Var<T> model_forward<T>(Tape<T>&, const Tensor<T>&, std::size_t,               \
                                   const ModelVars<T>&, const MstrConfig&,                \
                                   const ForwardContext&);                                \
  template Tensor<T> predict_logits<T>(const Tensor<T>&, std::size_t, const ModelParams<T>&, \
                                       const MstrConfig&);                                \
  template std::size_t argmax<T>(const Tensor<T>&);

MSTR_INSTANTIATE_MODEL(float)
MSTR_INSTANTIATE_MODEL(double)

#undef MSTR_INSTANTIATE_MODEL

}  // namespace mstr
