#pragma once

// Differentiable primitives. Each op computes its forward value eagerly,
// appends a node to the operand tape and registers an analytic backward rule.
// Matmul-like ops charge their multiply-accumulates to the tape's MacCounter.

#include <cstddef>
#include <random>
#include <span>

#include "mstr/tape.hpp"
#include "mstr/tensor.hpp"

namespace mstr {

/// Layer-norm epsilon, added to the population variance inside the sqrt.
inline constexpr double kLayerNormEps = 1e-5;

/// x * Phi(x) with the exact Gaussian CDF.
double gelu_value(double x);
/// d/dx gelu(x) = Phi(x) + x * phi(x).
double gelu_derivative(double x);

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

/// a + bias broadcast over rows; bias is 1 x cols.
template <typename T>
Var<T> add_bias(Var<T> a, Var<T> bias);

template <typename T>
Var<T> scale(Var<T> a, T factor);

template <typename T>
Var<T> gelu(Var<T> a);

template <typename T>
Var<T> softmax_rows(Var<T> a);

template <typename T>
Var<T> layer_norm(Var<T> a, Var<T> gamma, Var<T> beta, T eps = static_cast<T>(kLayerNormEps));

/// Mean of each run of p consecutive rows. Rows must be divisible by p.
template <typename T>
Var<T> avg_pool_time(Var<T> x, std::size_t p);

/// Repeats every row s consecutive times.
template <typename T>
Var<T> upsample_nearest_time(Var<T> x, std::size_t s);

template <typename T>
Var<T> transpose(Var<T> a);

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t width);

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts);

/// 1 x cols mean over rows [0, count).
template <typename T>
Var<T> mean_rows(Var<T> a, std::size_t count);

template <typename T>
Var<T> sum_all(Var<T> a);

/// Scalar sum(a .* weights); used to scalarize outputs in gradient checks.
template <typename T>
Var<T> dot_constant(Var<T> a, const Tensor<T>& weights);

/// -log softmax(logits)[label] for a 1 x C logit row.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::size_t label);

/// Inverted dropout with keep probability 1 - rate. rate == 0 returns `a`.
template <typename T>
Var<T> dropout(Var<T> a, double rate, std::mt19937_64& rng);

/// Per-window, per-head attention softmax(q k^T * scale) v over contiguous
/// row windows of length `window` and column slices of width cols/heads.
template <typename T>
Var<T> windowed_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t window, std::size_t heads,
                          double scale);

}  // namespace mstr
