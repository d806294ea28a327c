#include "mstr/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mstr::kernels {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelMacThreshold = 1 << 15;

// Row i of c = a * b. Accumulates c[i][j] in ascending k.
template <typename T>
inline void matmul_row(const T* a, const T* b, T* c, std::size_t i, std::size_t k,
                       std::size_t n) {
  T* ci = c + i * n;
  std::fill(ci, ci + n, T(0));
  const T* ai = a + i * k;
  for (std::size_t kk = 0; kk < k; ++kk) {
    const T aik = ai[kk];
    const T* bk = b + kk * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
  }
}

template <typename T>
inline void matmul_nt_row(const T* a, const T* b, T* c, std::size_t i, std::size_t k,
                          std::size_t n) {
  const T* ai = a + i * k;
  for (std::size_t j = 0; j < n; ++j) {
    const T* bj = b + j * k;
    T s = 0;
    for (std::size_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
    c[i * n + j] = s;
  }
}

// Row i of c = a^T * b where a is k x m.
template <typename T>
inline void matmul_tn_row(const T* a, const T* b, T* c, std::size_t i, std::size_t m,
                          std::size_t k, std::size_t n) {
  T* ci = c + i * n;
  std::fill(ci, ci + n, T(0));
  for (std::size_t r = 0; r < k; ++r) {
    const T ari = a[r * m + i];
    const T* br = b + r * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += ari * br[j];
  }
}

// One (window, head) block of the forward pass.
template <typename T>
void attention_block_forward(const T* q, const T* k, const T* v, T* out, T* probs,
                             const AttentionGeometry& g, std::size_t w, std::size_t h) {
  const std::size_t p = g.window;
  const std::size_t d = g.head_dim();
  const std::size_t ld = g.cols;
  const std::size_t r0 = w * p;
  const std::size_t c0 = h * d;
  const T scale = static_cast<T>(g.scale);
  T* pb = probs + (w * g.heads + h) * p * p;

  for (std::size_t i = 0; i < p; ++i) {
    const T* qi = q + (r0 + i) * ld + c0;
    T* prow = pb + i * p;
    for (std::size_t j = 0; j < p; ++j) {
      const T* kj = k + (r0 + j) * ld + c0;
      T s = 0;
      for (std::size_t e = 0; e < d; ++e) s += qi[e] * kj[e];
      prow[j] = s * scale;
    }
    softmax_row(prow, p);

    T* oi = out + (r0 + i) * ld + c0;
    std::fill(oi, oi + d, T(0));
    for (std::size_t j = 0; j < p; ++j) {
      const T pij = prow[j];
      const T* vj = v + (r0 + j) * ld + c0;
      for (std::size_t e = 0; e < d; ++e) oi[e] += pij * vj[e];
    }
  }
}

template <typename T>
void attention_block_backward(const T* q, const T* k, const T* v, const T* probs,
                              const T* dout, T* dq, T* dk, T* dv,
                              const AttentionGeometry& g, std::size_t w, std::size_t h,
                              std::vector<T>& scratch) {
  const std::size_t p = g.window;
  const std::size_t d = g.head_dim();
  const std::size_t ld = g.cols;
  const std::size_t r0 = w * p;
  const std::size_t c0 = h * d;
  const T scale = static_cast<T>(g.scale);
  const T* pb = probs + (w * g.heads + h) * p * p;

  scratch.assign(p * p, T(0));
  T* ds = scratch.data();

  // dP = dO V^T, then dS = P * (dP - rowsum(dP * P)).
  for (std::size_t i = 0; i < p; ++i) {
    const T* doi = dout + (r0 + i) * ld + c0;
    T dot = 0;
    for (std::size_t j = 0; j < p; ++j) {
      const T* vj = v + (r0 + j) * ld + c0;
      T s = 0;
      for (std::size_t e = 0; e < d; ++e) s += doi[e] * vj[e];
      ds[i * p + j] = s;
      dot += s * pb[i * p + j];
    }
    for (std::size_t j = 0; j < p; ++j) ds[i * p + j] = pb[i * p + j] * (ds[i * p + j] - dot);
  }

  for (std::size_t j = 0; j < p; ++j) {
    T* dvj = dv + (r0 + j) * ld + c0;
    T* dkj = dk + (r0 + j) * ld + c0;
    std::fill(dvj, dvj + d, T(0));
    std::fill(dkj, dkj + d, T(0));
    for (std::size_t i = 0; i < p; ++i) {
      const T pij = pb[i * p + j];
      const T dsij = ds[i * p + j] * scale;
      const T* doi = dout + (r0 + i) * ld + c0;
      const T* qi = q + (r0 + i) * ld + c0;
      for (std::size_t e = 0; e < d; ++e) {
        dvj[e] += pij * doi[e];
        dkj[e] += dsij * qi[e];
      }
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    T* dqi = dq + (r0 + i) * ld + c0;
    std::fill(dqi, dqi + d, T(0));
    for (std::size_t j = 0; j < p; ++j) {
      const T dsij = ds[i * p + j] * scale;
      const T* kj = k + (r0 + j) * ld + c0;
      for (std::size_t e = 0; e < d; ++e) dqi[e] += dsij * kj[e];
    }
  }
}

}  // namespace

namespace serial {

template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a, b, c, i, k, n);
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_nt_row(a, b, c, i, k, n);
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_tn_row(a, b, c, i, m, k, n);
}

template <typename T>
void windowed_attention_forward(const T* q, const T* k, const T* v, T* out, T* probs,
                                const AttentionGeometry& g) {
  for (std::size_t w = 0; w < g.windows(); ++w)
    for (std::size_t h = 0; h < g.heads; ++h) attention_block_forward(q, k, v, out, probs, g, w, h);
}

template <typename T>
void windowed_attention_backward(const T* q, const T* k, const T* v, const T* probs,
                                 const T* dout, T* dq, T* dk, T* dv,
                                 const AttentionGeometry& g) {
  std::vector<T> scratch;
  for (std::size_t w = 0; w < g.windows(); ++w)
    for (std::size_t h = 0; h < g.heads; ++h)
      attention_block_backward(q, k, v, probs, dout, dq, dk, dv, g, w, h, scratch);
}

}  // namespace serial

namespace parallel {

template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelMacThreshold)
  for (std::int64_t i = 0; i < rows; ++i) matmul_row(a, b, c, static_cast<std::size_t>(i), k, n);
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelMacThreshold)
  for (std::int64_t i = 0; i < rows; ++i)
    matmul_nt_row(a, b, c, static_cast<std::size_t>(i), k, n);
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > kParallelMacThreshold)
  for (std::int64_t i = 0; i < rows; ++i)
    matmul_tn_row(a, b, c, static_cast<std::size_t>(i), m, k, n);
}

template <typename T>
void windowed_attention_forward(const T* q, const T* k, const T* v, T* out, T* probs,
                                const AttentionGeometry& g) {
  const auto tasks = static_cast<std::int64_t>(g.windows() * g.heads);
  const std::size_t work = g.rows * g.window * g.cols;
#pragma omp parallel for schedule(static) if (work > kParallelMacThreshold)
  for (std::int64_t t = 0; t < tasks; ++t) {
    const auto task = static_cast<std::size_t>(t);
    attention_block_forward(q, k, v, out, probs, g, task / g.heads, task % g.heads);
  }
}

template <typename T>
void windowed_attention_backward(const T* q, const T* k, const T* v, const T* probs,
                                 const T* dout, T* dq, T* dk, T* dv,
                                 const AttentionGeometry& g) {
  const auto tasks = static_cast<std::int64_t>(g.windows() * g.heads);
  const std::size_t work = g.rows * g.window * g.cols;
#pragma omp parallel if (work > kParallelMacThreshold)
  {
    std::vector<T> scratch;
#pragma omp for schedule(static)
    for (std::int64_t t = 0; t < tasks; ++t) {
      const auto task = static_cast<std::size_t>(t);
      attention_block_backward(q, k, v, probs, dout, dq, dk, dv, g, task / g.heads,
                               task % g.heads, scratch);
    }
  }
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

#define MSTR_INSTANTIATE_KERNELS(NS, T)                                                    \
  template void NS::matmul<T>(const T*, const T*, T*, std::size_t, std::size_t,            \
                              std::size_t);                                                \
  template void NS::matmul_nt<T>(const T*, const T*, T*, std::size_t, std::size_t,         \
                                 std::size_t);                                             \
  template void NS::matmul_tn<T>(const T*, const T*, T*, std::size_t, std::size_t,         \
                                 std::size_t);                                             \
  template void NS::windowed_attention_forward<T>(const T*, const T*, const T*, T*, T*,    \
                                                  const AttentionGeometry&);               \
  template void NS::windowed_attention_backward<T>(const T*, const T*, const T*, const T*, \
                                                   const T*, T*, T*, T*,                   \
                                                   const AttentionGeometry&);

MSTR_INSTANTIATE_KERNELS(serial, float)
MSTR_INSTANTIATE_KERNELS(serial, double)
MSTR_INSTANTIATE_KERNELS(parallel, float)
MSTR_INSTANTIATE_KERNELS(parallel, double)

#undef MSTR_INSTANTIATE_KERNELS

}  // namespace mstr::kernels
