#pragma once

// Raw compute kernels behind the differentiable ops. Each kernel exists twice:
// `serial` is the plain reference loop nest, `parallel` distributes the same
// per-element arithmetic over OpenMP threads. Both variants perform identical
// floating point operations per output element, so their results are bitwise
// equal; tests and the benchmark rely on that.

#include <cmath>
#include <cstddef>
#include <limits>

namespace mstr::kernels {

/// Geometry of a windowed multi-head attention call. Rows are split into
/// `rows / window` contiguous windows, columns into `heads` slices of width
/// `cols / heads`.
struct AttentionGeometry {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t window = 0;
  std::size_t heads = 1;
  double scale = 1.0;

  std::size_t head_dim() const noexcept { return cols / heads; }
  std::size_t windows() const noexcept { return rows / window; }
  /// Length of the probability buffer: one window x window block per (window, head).
  std::size_t prob_size() const noexcept { return windows() * heads * window * window; }
};

/// Numerically stable in-place softmax of one row.
template <typename T>
inline void softmax_row(T* row, std::size_t n) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = row[j] > mx ? row[j] : mx;
  T sum = 0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
}

namespace serial {

/// c[m x n] = a[m x k] * b[k x n]
template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

/// c[m x n] = a[m x k] * b[n x k]^T
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

/// c[m x n] = a[k x m]^T * b[k x n]
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

/// out = per-window, per-head softmax(q k^T * scale) v. `probs` receives the
/// attention weights (AttentionGeometry::prob_size() entries).
template <typename T>
void windowed_attention_forward(const T* q, const T* k, const T* v, T* out, T* probs,
                                const AttentionGeometry& g);

/// Overwrites dq, dk, dv with the gradients given the upstream dout.
template <typename T>
void windowed_attention_backward(const T* q, const T* k, const T* v, const T* probs,
                                 const T* dout, T* dq, T* dk, T* dv,
                                 const AttentionGeometry& g);

}  // namespace serial

namespace parallel {

template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

template <typename T>
void windowed_attention_forward(const T* q, const T* k, const T* v, T* out, T* probs,
                                const AttentionGeometry& g);

template <typename T>
void windowed_attention_backward(const T* q, const T* k, const T* v, const T* probs,
                                 const T* dout, T* dq, T* dk, T* dv,
                                 const AttentionGeometry& g);

}  // namespace parallel

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace mstr::kernels
