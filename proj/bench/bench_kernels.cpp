// Serial reference kernels against their OpenMP counterparts, plus attention
// cost as the sequence grows. Wall-clock numbers are informative only.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mstr/block.hpp"
#include "mstr/kernels.hpp"

namespace {

std::vector<float> random_buffer(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(n * n, 1), b = random_buffer(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      mstr::kernels::parallel::matmul(a.data(), b.data(), c.data(), n, n, n);
    } else {
      mstr::kernels::serial::matmul(a.data(), b.data(), c.data(), n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Arg(64)->Arg(128)->Arg(256);

template <bool Parallel>
void BM_WindowedAttention(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 64, window = 3, heads = 16;
  const mstr::kernels::AttentionGeometry g{rows, cols, window, heads,
                                           mstr::attention_scale(cols, heads)};
  const auto q = random_buffer(rows * cols, 3), k = random_buffer(rows * cols, 4),
             v = random_buffer(rows * cols, 5);
  std::vector<float> out(rows * cols), probs(g.prob_size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      mstr::kernels::parallel::windowed_attention_forward(q.data(), k.data(), v.data(), out.data(),
                                                          probs.data(), g);
    } else {
      mstr::kernels::serial::windowed_attention_forward(q.data(), k.data(), v.data(), out.data(),
                                                        probs.data(), g);
    }
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_WindowedAttention<false>)->Name("windowed_attention/serial")->Arg(243)->Arg(2187);
BENCHMARK(BM_WindowedAttention<true>)->Name("windowed_attention/parallel")->Arg(243)->Arg(2187);

// Whole attention sublayer on the tape: global attention against the
// four-level pyramid with windowed attention.
void BM_AttentionScaling(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  const bool multi_scale = state.range(1) != 0;
  const std::size_t F = 64, heads = 16;
  mstr::Tensor<float> q(T, F), k(T, F), v(T, F);
  const auto qs = random_buffer(T * F, 6), ks = random_buffer(T * F, 7), vs = random_buffer(T * F, 8);
  std::copy(qs.begin(), qs.end(), q.data());
  std::copy(ks.begin(), ks.end(), k.data());
  std::copy(vs.begin(), vs.end(), v.data());
  for (auto _ : state) {
    mstr::Tape<float> tape;
    const mstr::Qkv<float> qkv{tape.constant(q), tape.constant(k), tape.constant(v)};
    if (multi_scale) {
      const auto pyramid = mstr::build_scale_pyramid(qkv, 3, 4);
      for (const auto& level : pyramid.levels) {
        benchmark::DoNotOptimize(mstr::fractal_attention_scale(level, 3, heads).id);
      }
    } else {
      benchmark::DoNotOptimize(mstr::full_attention(qkv, heads).id);
    }
  }
  state.SetLabel(multi_scale ? "mstr" : "vanilla");
}
BENCHMARK(BM_AttentionScaling)
    ->Name("attention_sublayer")
    ->ArgsProduct({{81, 162, 324, 648}, {0, 1}})
    ->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
