#include "mstr/block.hpp"

#include <cmath>
#include <string>

namespace mstr {
namespace {

std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) r *= base;
  return r;
}

template <typename T>
Var<T> maybe_dropout(Var<T> a, const ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout_rate == 0.0) return a;
  if (ctx.rng == nullptr) throw ContractError("dropout enabled without an RNG in ForwardContext");
  return dropout(a, ctx.dropout_rate, *ctx.rng);
}

template <typename T>
Var<T> residual_block_tail(Var<T> x, Var<T> attended, const BlockVars<T>& params,
                           const ForwardContext& ctx) {
  Var<T> h1 = layer_norm(add(x, maybe_dropout(attended, ctx)), params.ln1_gamma, params.ln1_beta);
  Var<T> ff = feed_forward(h1, params);
  return layer_norm(add(h1, maybe_dropout(ff, ctx)), params.ln2_gamma, params.ln2_beta);
}

}  // namespace

double attention_scale(std::size_t model_dim, std::size_t heads) {
  return 1.0 / std::sqrt(static_cast<double>(model_dim / heads));
}

template <typename T>
BlockVars<T> bind_block(Tape<T>& tape, const BlockParams<T>& p) {
  return BlockVars<T>{tape.parameter(p.w_q),       tape.parameter(p.w_k),
                      tape.parameter(p.w_v),       tape.parameter(p.w_o),
                      tape.parameter(p.ffn_w1),    tape.parameter(p.ffn_b1),
                      tape.parameter(p.ffn_w2),    tape.parameter(p.ffn_b2),
                      tape.parameter(p.ln1_gamma), tape.parameter(p.ln1_beta),
                      tape.parameter(p.ln2_gamma), tape.parameter(p.ln2_beta)};
}

template <typename T>
Qkv<T> project_qkv(Var<T> x, const BlockVars<T>& params) {
  if (x.cols() != params.w_q.rows()) {
    throw DimensionError("project_qkv: input " + x.value().shape() +
                         " does not match projection " + params.w_q.value().shape());
  }
  ComponentScope scope(x.tape->counter(), MacComponent::kProjections);
  return {matmul(x, params.w_q), matmul(x, params.w_k), matmul(x, params.w_v)};
}

template <typename T>
ScalePyramid<T> build_scale_pyramid(const Qkv<T>& qkv, std::size_t p, std::size_t levels) {
  if (p < 2) throw ConfigError("build_scale_pyramid: fractal factor p must be >= 2");
  if (levels < 1) throw ConfigError("build_scale_pyramid: at least one scale level is required");
  const std::size_t length = qkv.q.rows();
  const std::size_t coarsest = ipow(p, levels - 1);
  if (length % coarsest != 0) {
    const std::size_t padded = (length + coarsest - 1) / coarsest * coarsest;
    throw ConfigError("build_scale_pyramid: sequence length " + std::to_string(length) +
                      " is not divisible by p^(L-1) = " + std::to_string(coarsest) + "; pad by " +
                      std::to_string(padded - length) + " frames to " + std::to_string(padded));
  }
  ScalePyramid<T> pyramid;
  pyramid.levels.push_back(qkv);
  pyramid.scale_factors.push_back(1);
  for (std::size_t k = 1; k < levels; ++k) {
    const auto& prev = pyramid.levels.back();
    pyramid.levels.push_back(
        {avg_pool_time(prev.q, p), avg_pool_time(prev.k, p), avg_pool_time(prev.v, p)});
    pyramid.scale_factors.push_back(pyramid.scale_factors.back() * p);
  }
  return pyramid;
}

template <typename T>
Var<T> fractal_attention_scale(const Qkv<T>& level, std::size_t p, std::size_t heads) {
  return windowed_attention(level.q, level.k, level.v, p, heads,
                            attention_scale(level.q.cols(), heads == 0 ? 1 : heads));
}

template <typename T>
Var<T> scale_mix(std::span<const Var<T>> level_outputs, std::span<const std::size_t> scale_factors,
                 Var<T> w_o, std::size_t length) {
  if (level_outputs.empty()) throw EmptyInputError("scale_mix: no scale levels");
  if (level_outputs.size() != scale_factors.size()) {
    throw ContractError("scale_mix: " + std::to_string(level_outputs.size()) + " levels but " +
                        std::to_string(scale_factors.size()) + " scale factors");
  }
  Var<T> sum{};
  for (std::size_t k = 0; k < level_outputs.size(); ++k) {
    Var<T> y = level_outputs[k];
    if (y.rows() * scale_factors[k] != length) {
      throw ContractError("scale_mix: level " + std::to_string(k + 1) + " has " +
                          std::to_string(y.rows()) + " rows, which up-sample by " +
                          std::to_string(scale_factors[k]) + " to " +
                          std::to_string(y.rows() * scale_factors[k]) + " instead of " +
                          std::to_string(length));
    }
    Var<T> up = scale_factors[k] == 1 ? y : upsample_nearest_time(y, scale_factors[k]);
    Var<T> act = gelu(up);
    sum = k == 0 ? act : add(sum, act);
  }
  ComponentScope scope(w_o.tape->counter(), MacComponent::kProjections);
  return matmul(sum, w_o);
}

template <typename T>
Var<T> full_attention(const Qkv<T>& qkv, std::size_t heads) {
  const std::size_t width = qkv.q.cols();
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("full_attention: width " + std::to_string(width) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t d = width / heads;
  const T s = static_cast<T>(attention_scale(width, heads));
  auto& counter = qkv.q.tape->counter();
  std::vector<Var<T>> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var<T> qh = heads == 1 ? qkv.q : slice_cols(qkv.q, h * d, d);
    Var<T> kh = heads == 1 ? qkv.k : slice_cols(qkv.k, h * d, d);
    Var<T> vh = heads == 1 ? qkv.v : slice_cols(qkv.v, h * d, d);
    Var<T> scores;
    {
      ComponentScope scope(counter, MacComponent::kAttentionScores);
      scores = scale(matmul(qh, transpose(kh)), s);
    }
    Var<T> probs = softmax_rows(scores);
    ComponentScope scope(counter, MacComponent::kAttentionValues);
    outs.push_back(matmul(probs, vh));
  }
  if (heads == 1) return outs.front();
  return concat_cols<T>(outs);
}

template <typename T>
Var<T> feed_forward(Var<T> h, const BlockVars<T>& params) {
  ComponentScope scope(h.tape->counter(), MacComponent::kFfn);
  Var<T> hidden = gelu(add_bias(matmul(h, params.ffn_w1), params.ffn_b1));
  return add_bias(matmul(hidden, params.ffn_w2), params.ffn_b2);
}

template <typename T>
Var<T> mstr_block_forward(Var<T> x, const BlockVars<T>& params, std::size_t p, std::size_t levels,
                          std::size_t heads, const ForwardContext& ctx) {
  const std::size_t length = x.rows();
  if (p >= 1 && levels >= 1 && length % ipow(p, levels) != 0) {
    throw ConfigError("mstr_block_forward: sequence length " + std::to_string(length) +
                      " must be a multiple of p^L = " + std::to_string(ipow(p, levels)));
  }
  const Qkv<T> qkv = project_qkv(x, params);
  const ScalePyramid<T> pyramid = build_scale_pyramid(qkv, p, levels);
  std::vector<Var<T>> ys;
  ys.reserve(levels);
  for (const auto& level : pyramid.levels) ys.push_back(fractal_attention_scale(level, p, heads));
  Var<T> mixed = scale_mix<T>(ys, pyramid.scale_factors, params.w_o, length);
  return residual_block_tail(x, mixed, params, ctx);
}

template <typename T>
Var<T> vanilla_block_forward(Var<T> x, const BlockVars<T>& params, std::size_t heads,
                             const ForwardContext& ctx) {
  const Qkv<T> qkv = project_qkv(x, params);
  Var<T> attended = gelu(full_attention(qkv, heads));
  Var<T> projected;
  {
    ComponentScope scope(x.tape->counter(), MacComponent::kProjections);
    projected = matmul(attended, params.w_o);
  }
  return residual_block_tail(x, projected, params, ctx);
}

#define MSTR_INSTANTIATE_BLOCK(T)                                                            \
  template BlockVars<T> bind_block<T>(Tape<T>&, const BlockParams<T>&);                      \
  template Qkv<T> project_qkv<T>(Var<T>, const BlockVars<T>&);                               \
  template ScalePyramid<T> build_scale_pyramid<T>(const Qkv<T>&, std::size_t, std::size_t);  \
  template Var<T> fractal_attention_scale<T>(const Qkv<T>&, std::size_t, std::size_t);       \
  template Var<T> scale_mix<T>(std::span<const Var<T>>, std::span<const std::size_t>, Var<T>, \
                               std::size_t);                                                 \
  template Var<T> full_attention<T>(const Qkv<T>&, std::size_t);                             \
  template Var<T> feed_forward<T>(Var<T>, const BlockVars<T>&);                              \
  template Var<T> mstr_block_forward<T>(Var<T>, const BlockVars<T>&, std::size_t,           \
                                        std::size_t, std::size_t, const ForwardContext&);    \
  template Var<T> vanilla_block_forward<T>(Var<T>, const BlockVars<T>&, std::size_t,        \
                                           const ForwardContext&);

MSTR_INSTANTIATE_BLOCK(float)
MSTR_INSTANTIATE_BLOCK(double)

#undef MSTR_INSTANTIATE_BLOCK

}  // namespace mstr
