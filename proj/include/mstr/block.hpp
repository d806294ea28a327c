#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "mstr/ops.hpp"
#include "mstr/tape.hpp"
#include "mstr/tensor.hpp"

namespace mstr {

/// Weights of one encoder block. Both the multi-scale block and the
/// full-attention baseline use exactly this layout.
template <typename T>
struct BlockParams {
  Tensor<T> w_q, w_k, w_v, w_o;  // F x F, no biases
  Tensor<T> ffn_w1, ffn_b1;      // F x d_ff, 1 x d_ff
  Tensor<T> ffn_w2, ffn_b2;      // d_ff x F, 1 x F
  Tensor<T> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;

  /// Zero weights, unit gammas.
  static BlockParams zeros(std::size_t model_dim, std::size_t ffn_dim) {
    return BlockParams{Tensor<T>(model_dim, model_dim), Tensor<T>(model_dim, model_dim),
                       Tensor<T>(model_dim, model_dim), Tensor<T>(model_dim, model_dim),
                       Tensor<T>(model_dim, ffn_dim),   Tensor<T>(1, ffn_dim),
                       Tensor<T>(ffn_dim, model_dim),   Tensor<T>(1, model_dim),
                       Tensor<T>(1, model_dim, T(1)),   Tensor<T>(1, model_dim),
                       Tensor<T>(1, model_dim, T(1)),   Tensor<T>(1, model_dim)};
  }

  std::size_t model_dim() const { return w_q.rows(); }

  /// Visits every tensor in the canonical order used by checkpoints and optimizers.
  template <typename Fn>
  void for_each(Fn&& fn) {
    for (Tensor<T>* t : {&w_q, &w_k, &w_v, &w_o, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2, &ln1_gamma,
                         &ln1_beta, &ln2_gamma, &ln2_beta})
      fn(*t);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const Tensor<T>* t : {&w_q, &w_k, &w_v, &w_o, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2,
                               &ln1_gamma, &ln1_beta, &ln2_gamma, &ln2_beta})
      fn(*t);
  }

  bool operator==(const BlockParams&) const = default;
};

/// Tape handles for a bound BlockParams.
template <typename T>
struct BlockVars {
  Var<T> w_q, w_k, w_v, w_o;
  Var<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Var<T> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

/// Registers the block's tensors as parameters (trainable leaves) on `tape`.
template <typename T>
BlockVars<T> bind_block(Tape<T>& tape, const BlockParams<T>& p);

template <typename T>
struct Qkv {
  Var<T> q, k, v;
};

template <typename T>
struct ScalePyramid {
  std::vector<Qkv<T>> levels;               // level k holds T / p^(k-1) rows
  std::vector<std::size_t> scale_factors;   // 1, p, p^2, ...
};

/// Runtime switches for stochastic layers.
struct ForwardContext {
  bool training = false;
  double dropout_rate = 0.0;
  std::mt19937_64* rng = nullptr;
};

/// 1 / sqrt(head width). Equals 1/sqrt(F) for a single head.
double attention_scale(std::size_t model_dim, std::size_t heads);

template <typename T>
Qkv<T> project_qkv(Var<T> x, const BlockVars<T>& params);

/// Level 1 is the unpooled triple; level k averages p adjacent frames of level k-1.
template <typename T>
ScalePyramid<T> build_scale_pyramid(const Qkv<T>& qkv, std::size_t p, std::size_t levels);

/// Self-attention restricted to contiguous windows of p frames, per head.
template <typename T>
Var<T> fractal_attention_scale(const Qkv<T>& level, std::size_t p, std::size_t heads);

/// Nearest up-sample every level to `length` rows, GELU, sum in ascending
/// level order, then project by w_o.
template <typename T>
Var<T> scale_mix(std::span<const Var<T>> level_outputs, std::span<const std::size_t> scale_factors,
                 Var<T> w_o, std::size_t length);

/// Global multi-head attention built from matmul/softmax primitives.
template <typename T>
Var<T> full_attention(const Qkv<T>& qkv, std::size_t heads);

template <typename T>
Var<T> feed_forward(Var<T> h, const BlockVars<T>& params);

/// Multi-scale sublayer (projection, pyramid, fractal attention, mixer)
/// followed by post-norm residual wiring and the position-wise FFN.
template <typename T>
Var<T> mstr_block_forward(Var<T> x, const BlockVars<T>& params, std::size_t p, std::size_t levels,
                          std::size_t heads, const ForwardContext& ctx = {});

/// Baseline block: global attention in place of the multi-scale path. The
/// attention output still passes through GELU before w_o so the two blocks
/// coincide when the pyramid has one level and the window spans the sequence.
template <typename T>
Var<T> vanilla_block_forward(Var<T> x, const BlockVars<T>& params, std::size_t heads,
                             const ForwardContext& ctx = {});

}  // namespace mstr
