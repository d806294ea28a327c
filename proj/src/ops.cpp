#include "mstr/ops.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mstr/kernels.hpp"

namespace mstr {
namespace {

template <typename T>
void require_same_tape(Var<T> a, Var<T> b, const char* op) {
  if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands live on different tapes");
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

}  // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "matmul");
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions disagree for " + av.shape() + " x " + bv.shape());
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<T> out(m, n);
  kernels::parallel::matmul(av.data(), bv.data(), out.data(), m, k, n);
  a.tape->counter().add(static_cast<std::uint64_t>(m) * k * n);
  return a.tape->record(OpKind::kMatmul, {a.id, b.id}, std::move(out),
                        [ia = a.id, ib = b.id, m, k, n](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          if (t.requires_grad(ia)) {
                            Tensor<T> ga(m, k);
                            kernels::parallel::matmul_nt(g.data(), t.value(ib).data(), ga.data(),
                                                         m, n, k);
                            t.accumulate(ia, ga);
                          }
                          if (t.requires_grad(ib)) {
                            Tensor<T> gb(k, n);
                            kernels::parallel::matmul_tn(t.value(ia).data(), g.data(), gb.data(),
                                                         k, m, n);
                            t.accumulate(ib, gb);
                          }
                        });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->record(OpKind::kAdd, {a.id, b.id}, std::move(out),
                        [ia = a.id, ib = b.id](Tape<T>& t, std::size_t self) {
                          t.accumulate(ia, t.grad(self));
                          t.accumulate(ib, t.grad(self));
                        });
}

template <typename T>
Var<T> add_bias(Var<T> a, Var<T> bias) {
  require_same_tape(a, bias, "add_bias");
  const auto& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != a.cols()) {
    throw DimensionError("add_bias: bias " + bv.shape() + " does not broadcast over " +
                         a.value().shape());
  }
  Tensor<T> out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return a.tape->record(OpKind::kAddBias, {a.id, bias.id}, std::move(out),
                        [ia = a.id, ib = bias.id](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          t.accumulate(ia, g);
                          if (t.requires_grad(ib)) {
                            Tensor<T> gb(1, g.cols());
                            for (std::size_t r = 0; r < g.rows(); ++r)
                              for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
                            t.accumulate(ib, gb);
                          }
                        });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& x : out.values()) x *= factor;
  return a.tape->record(OpKind::kScale, {a.id}, std::move(out),
                        [ia = a.id, factor](Tape<T>& t, std::size_t self) {
                          Tensor<T> g = t.grad(self);
                          for (auto& x : g.values()) x *= factor;
                          t.accumulate(ia, g);
                        });
}

template <typename T>
Var<T> gelu(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& x : out.values()) x = static_cast<T>(gelu_value(x));
  return a.tape->record(OpKind::kGelu, {a.id}, std::move(out),
                        [ia = a.id](Tape<T>& t, std::size_t self) {
                          Tensor<T> g = t.grad(self);
                          const auto& x = t.value(ia);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            g[i] *= static_cast<T>(gelu_derivative(x[i]));
                          t.accumulate(ia, g);
                        });
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  Tensor<T> out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) kernels::softmax_row(out.row(r).data(), out.cols());
  return a.tape->record(OpKind::kSoftmaxRows, {a.id}, std::move(out),
                        [ia = a.id](Tape<T>& t, std::size_t self) {
                          const auto& s = t.value(self);
                          Tensor<T> g = t.grad(self);
                          for (std::size_t r = 0; r < g.rows(); ++r) {
                            T dot = 0;
                            for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * s(r, c);
                            for (std::size_t c = 0; c < g.cols(); ++c)
                              g(r, c) = s(r, c) * (g(r, c) - dot);
                          }
                          t.accumulate(ia, g);
                        });
}

template <typename T>
Var<T> layer_norm(Var<T> a, Var<T> gamma, Var<T> beta, T eps) {
  require_same_tape(a, gamma, "layer_norm");
  require_same_tape(a, beta, "layer_norm");
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  const auto& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  if (gv.rows() != 1 || gv.cols() != cols || !gv.same_shape(bv)) {
    throw DimensionError("layer_norm: gamma " + gv.shape() + " / beta " + bv.shape() +
                         " do not match feature width of " + x.shape());
  }
  Tensor<T> xhat(rows, cols);
  std::vector<T> inv_std(rows);
  Tensor<T> out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += x(r, c);
    mean /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<T>(cols);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat(r, c) = (x(r, c) - mean) * inv_std[r];
      out(r, c) = xhat(r, c) * gv[c] + bv[c];
    }
  }
  return a.tape->record(
      OpKind::kLayerNorm, {a.id, gamma.id, beta.id}, std::move(out),
      [ia = a.id, ig = gamma.id, ib = beta.id, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& gv = t.value(ig);
        const std::size_t rows = g.rows(), cols = g.cols();
        if (t.requires_grad(ig) || t.requires_grad(ib)) {
          Tensor<T> dg(1, cols), db(1, cols);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
              dg[c] += g(r, c) * xhat(r, c);
              db[c] += g(r, c);
            }
          t.accumulate(ig, dg);
          t.accumulate(ib, db);
        }
        if (t.requires_grad(ia)) {
          Tensor<T> dx(rows, cols);
          const T n = static_cast<T>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            T sum_dh = 0, sum_dh_xh = 0;
            for (std::size_t c = 0; c < cols; ++c) {
              const T dh = g(r, c) * gv[c];
              sum_dh += dh;
              sum_dh_xh += dh * xhat(r, c);
            }
            for (std::size_t c = 0; c < cols; ++c) {
              const T dh = g(r, c) * gv[c];
              dx(r, c) = inv_std[r] * (dh - sum_dh / n - xhat(r, c) * sum_dh_xh / n);
            }
          }
          t.accumulate(ia, dx);
        }
      });
}

template <typename T>
Var<T> avg_pool_time(Var<T> x, std::size_t p) {
  const auto& xv = x.value();
  if (p == 0 || xv.rows() % p != 0) {
    throw ConfigError("avg_pool_time: " + std::to_string(xv.rows()) +
                      " rows are not divisible by window " + std::to_string(p));
  }
  const std::size_t out_rows = xv.rows() / p, cols = xv.cols();
  Tensor<T> out(out_rows, cols);
  const T inv = T(1) / static_cast<T>(p);
  for (std::size_t j = 0; j < out_rows; ++j) {
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t c = 0; c < cols; ++c) out(j, c) += xv(j * p + i, c);
    for (std::size_t c = 0; c < cols; ++c) out(j, c) *= inv;
  }
  return x.tape->record(OpKind::kAvgPoolTime, {x.id}, std::move(out),
                        [ix = x.id, p](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          Tensor<T> dx(g.rows() * p, g.cols());
                          const T inv = T(1) / static_cast<T>(p);
                          for (std::size_t r = 0; r < dx.rows(); ++r)
                            for (std::size_t c = 0; c < dx.cols(); ++c) dx(r, c) = g(r / p, c) * inv;
                          t.accumulate(ix, dx);
                        });
}

template <typename T>
Var<T> upsample_nearest_time(Var<T> x, std::size_t s) {
  if (s == 0) throw ConfigError("upsample_nearest_time: factor must be >= 1");
  const auto& xv = x.value();
  Tensor<T> out(xv.rows() * s, xv.cols());
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = xv(r / s, c);
  return x.tape->record(OpKind::kUpsampleNearestTime, {x.id}, std::move(out),
                        [ix = x.id, s](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          Tensor<T> dx(g.rows() / s, g.cols());
                          for (std::size_t r = 0; r < g.rows(); ++r)
                            for (std::size_t c = 0; c < g.cols(); ++c) dx(r / s, c) += g(r, c);
                          t.accumulate(ix, dx);
                        });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const auto& av = a.value();
  Tensor<T> out(av.cols(), av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(c, r) = av(r, c);
  return a.tape->record(OpKind::kTranspose, {a.id}, std::move(out),
                        [ia = a.id](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          Tensor<T> da(g.cols(), g.rows());
                          for (std::size_t r = 0; r < g.rows(); ++r)
                            for (std::size_t c = 0; c < g.cols(); ++c) da(c, r) = g(r, c);
                          t.accumulate(ia, da);
                        });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t width) {
  const auto& av = a.value();
  if (width == 0 || begin + width > av.cols()) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + width) + ") out of range for " + av.shape());
  }
  Tensor<T> out(av.rows(), width);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) out(r, c) = av(r, begin + c);
  return a.tape->record(OpKind::kSliceCols, {a.id}, std::move(out),
                        [ia = a.id, begin, cols = av.cols()](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          Tensor<T> da(g.rows(), cols);
                          for (std::size_t r = 0; r < g.rows(); ++r)
                            for (std::size_t c = 0; c < g.cols(); ++c) da(r, begin + c) = g(r, c);
                          t.accumulate(ia, da);
                        });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw EmptyInputError("concat_cols: no operands");
  Tape<T>* tape = parts.front().tape;
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids, widths;
  for (const auto& p : parts) {
    if (p.tape != tape) throw ContractError("concat_cols: operands live on different tapes");
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row count mismatch " + p.value().shape() + " vs " +
                           parts.front().value().shape());
    }
    ids.push_back(p.id);
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Tensor<T> out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, offset + c) = pv(r, c);
    offset += pv.cols();
  }
  return tape->record(OpKind::kConcatCols, ids, std::move(out),
                      [ids, widths](Tape<T>& t, std::size_t self) {
                        const auto& g = t.grad(self);
                        std::size_t offset = 0;
                        for (std::size_t i = 0; i < ids.size(); ++i) {
                          if (t.requires_grad(ids[i])) {
                            Tensor<T> d(g.rows(), widths[i]);
                            for (std::size_t r = 0; r < g.rows(); ++r)
                              for (std::size_t c = 0; c < widths[i]; ++c) d(r, c) = g(r, offset + c);
                            t.accumulate(ids[i], d);
                          }
                          offset += widths[i];
                        }
                      });
}

template <typename T>
Var<T> mean_rows(Var<T> a, std::size_t count) {
  const auto& av = a.value();
  if (count == 0) throw EmptyInputError("mean_rows: cannot average zero rows");
  if (count > av.rows()) {
    throw DimensionError("mean_rows: count " + std::to_string(count) + " exceeds rows of " +
                         av.shape());
  }
  Tensor<T> out(1, av.cols());
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out[c] += av(r, c);
  const T inv = T(1) / static_cast<T>(count);
  for (auto& x : out.values()) x *= inv;
  return a.tape->record(OpKind::kMeanRows, {a.id}, std::move(out),
                        [ia = a.id, count, rows = av.rows()](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          Tensor<T> da(rows, g.cols());
                          const T inv = T(1) / static_cast<T>(count);
                          for (std::size_t r = 0; r < count; ++r)
                            for (std::size_t c = 0; c < g.cols(); ++c) da(r, c) = g[c] * inv;
                          t.accumulate(ia, da);
                        });
}

template <typename T>
Var<T> sum_all(Var<T> a) {
  T s = 0;
  for (auto x : a.value().values()) s += x;
  return a.tape->record(OpKind::kSumAll, {a.id}, Tensor<T>(1, 1, s),
                        [ia = a.id](Tape<T>& t, std::size_t self) {
                          const auto& av = t.value(ia);
                          t.accumulate(ia, Tensor<T>(av.rows(), av.cols(), t.grad(self)[0]));
                        });
}

template <typename T>
Var<T> dot_constant(Var<T> a, const Tensor<T>& weights) {
  require_same_shape(a.value(), weights, "dot_constant");
  T s = 0;
  const auto& av = a.value();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * weights[i];
  return a.tape->record(OpKind::kDotConstant, {a.id}, Tensor<T>(1, 1, s),
                        [ia = a.id, weights](Tape<T>& t, std::size_t self) {
                          Tensor<T> d = weights;
                          const T g = t.grad(self)[0];
                          for (auto& x : d.values()) x *= g;
                          t.accumulate(ia, d);
                        });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::size_t label) {
  const auto& z = logits.value();
  if (z.rows() != 1) throw DimensionError("cross_entropy: expected 1 x C logits, got " + z.shape());
  if (label >= z.cols()) {
    throw ContractError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                        std::to_string(z.cols()) + ")");
  }
  Tensor<T> probs = z;
  kernels::softmax_row(probs.data(), probs.cols());
  T mx = z[0];
  for (auto x : z.values()) mx = std::max(mx, x);
  T sum = 0;
  for (auto x : z.values()) sum += std::exp(x - mx);
  const T loss = mx + std::log(sum) - z[label];
  return logits.tape->record(OpKind::kCrossEntropy, {logits.id}, Tensor<T>(1, 1, loss),
                             [iz = logits.id, label, probs = std::move(probs)](Tape<T>& t,
                                                                               std::size_t self) {
                               Tensor<T> d = probs;
                               d[label] -= T(1);
                               const T g = t.grad(self)[0];
                               for (auto& x : d.values()) x *= g;
                               t.accumulate(iz, d);
                             });
}

template <typename T>
Var<T> dropout(Var<T> a, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return a;
  const auto& av = a.value();
  Tensor<T> mask(av.rows(), av.cols());
  std::bernoulli_distribution keep(1.0 - rate);
  const T kept = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask.values()) m = keep(rng) ? kept : T(0);
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return a.tape->record(OpKind::kDropout, {a.id}, std::move(out),
                        [ia = a.id, mask = std::move(mask)](Tape<T>& t, std::size_t self) {
                          Tensor<T> d = t.grad(self);
                          for (std::size_t i = 0; i < d.size(); ++i) d[i] *= mask[i];
                          t.accumulate(ia, d);
                        });
}

template <typename T>
Var<T> windowed_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t window, std::size_t heads,
                          double scale) {
  require_same_tape(q, k, "windowed_attention");
  require_same_tape(q, v, "windowed_attention");
  const auto& qv = q.value();
  require_same_shape(qv, k.value(), "windowed_attention");
  require_same_shape(qv, v.value(), "windowed_attention");
  if (window == 0 || qv.rows() % window != 0) {
    throw ConfigError("windowed_attention: " + std::to_string(qv.rows()) +
                      " rows are not divisible by window " + std::to_string(window));
  }
  if (heads == 0 || qv.cols() % heads != 0) {
    throw ConfigError("windowed_attention: width " + std::to_string(qv.cols()) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  }
  kernels::AttentionGeometry geom{qv.rows(), qv.cols(), window, heads, scale};
  Tensor<T> out(qv.rows(), qv.cols());
  std::vector<T> probs(geom.prob_size());
  kernels::parallel::windowed_attention_forward(qv.data(), k.value().data(), v.value().data(),
                                                out.data(), probs.data(), geom);
  // Every query row attends over `window` keys across all heads: rows * window * cols per side.
  const auto per_side = static_cast<std::uint64_t>(qv.rows()) * window * qv.cols();
  auto& counter = q.tape->counter();
  counter.add(MacComponent::kAttentionScores, per_side);
  counter.add(MacComponent::kAttentionValues, per_side);

  return q.tape->record(
      OpKind::kWindowedAttention, {q.id, k.id, v.id}, std::move(out),
      [iq = q.id, ik = k.id, iv = v.id, geom, probs = std::move(probs)](Tape<T>& t,
                                                                         std::size_t self) {
        const auto& g = t.grad(self);
        Tensor<T> dq(geom.rows, geom.cols), dk(geom.rows, geom.cols), dv(geom.rows, geom.cols);
        kernels::parallel::windowed_attention_backward(
            t.value(iq).data(), t.value(ik).data(), t.value(iv).data(), probs.data(), g.data(),
            dq.data(), dk.data(), dv.data(), geom);
        t.accumulate(iq, dq);
        t.accumulate(ik, dk);
        t.accumulate(iv, dv);
      });
}

#define MSTR_INSTANTIATE_OPS(T)                                                            \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                               \
  template Var<T> add<T>(Var<T>, Var<T>);                                                  \
  template Var<T> add_bias<T>(Var<T>, Var<T>);                                             \
  template Var<T> scale<T>(Var<T>, T);                                                     \
  template Var<T> gelu<T>(Var<T>);                                                         \
  template Var<T> softmax_rows<T>(Var<T>);                                                 \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                \
  template Var<T> avg_pool_time<T>(Var<T>, std::size_t);                                   \
  template Var<T> upsample_nearest_time<T>(Var<T>, std::size_t);                           \
  template Var<T> transpose<T>(Var<T>);                                                    \
  template Var<T> slice_cols<T>(Var<T>, std::size_t, std::size_t);                         \
  template Var<T> concat_cols<T>(std::span<const Var<T>>);                                 \
  template Var<T> mean_rows<T>(Var<T>, std::size_t);                                       \
  template Var<T> sum_all<T>(Var<T>);                                                      \
  template Var<T> dot_constant<T>(Var<T>, const Tensor<T>&);                               \
  template Var<T> cross_entropy<T>(Var<T>, std::size_t);                                   \
  template Var<T> dropout<T>(Var<T>, double, std::mt19937_64&);                            \
  template Var<T> windowed_attention<T>(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t, \
                                        double);

MSTR_INSTANTIATE_OPS(float)
MSTR_INSTANTIATE_OPS(double)

#undef MSTR_INSTANTIATE_OPS

}  // namespace mstr
