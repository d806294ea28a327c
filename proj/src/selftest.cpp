#include "mstr/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "mstr/block.hpp"
#include "mstr/checkpoint.hpp"
#include "mstr/complexity.hpp"
#include "mstr/data.hpp"
#include "mstr/gradcheck.hpp"
#include "mstr/kernels.hpp"
#include "mstr/metrics.hpp"
#include "mstr/model.hpp"
#include "mstr/trainer.hpp"

namespace mstr {
namespace {

template <typename T>
Tensor<T> uniform_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo,
                         double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<T> t(rows, cols);
  for (auto& x : t.values()) x = static_cast<T>(dist(rng));
  return t;
}

BlockParams<float> random_block(std::size_t F, std::mt19937_64& rng) {
  auto p = BlockParams<float>::zeros(F, 4 * F);
  p.for_each([&rng](Tensor<float>& t) { t = uniform_tensor<float>(t.rows(), t.cols(), rng, -0.5, 0.5); });
  return p;
}

std::vector<Tensor<float>> level_outputs(const BlockParams<float>& params, const Tensor<float>& x,
                                         std::size_t p, std::size_t L, std::size_t heads) {
  Tape<float> tape;
  const auto vars = bind_block(tape, params);
  const auto pyramid = build_scale_pyramid(project_qkv(tape.constant(x), vars), p, L);
  std::vector<Tensor<float>> out;
  for (const auto& level : pyramid.levels) {
    out.push_back(fractal_attention_scale(level, p, heads).value());
  }
  return out;
}

bool rows_equal(const Tensor<float>& a, const Tensor<float>& b, std::size_t begin, std::size_t count) {
  for (std::size_t r = begin; r < begin + count; ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      if (a(r, c) != b(r, c)) return false;
  return true;
}

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string fmt(const char* pattern, double value) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), pattern, value);
  return buf;
}

PropertyResult check(std::string name, bool passed, std::string detail) {
  return {std::move(name), passed, std::move(detail)};
}

}  // namespace

double degeneracy_max_diff(std::size_t cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len_dist(2, 64), dim_dist(1, 32);
  double worst = 0.0;
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t T = len_dist(rng), F = dim_dist(rng);
    std::vector<std::size_t> divisors;
    for (std::size_t h = 1; h <= F; ++h)
      if (F % h == 0) divisors.push_back(h);
    const std::size_t heads =
        divisors[std::uniform_int_distribution<std::size_t>(0, divisors.size() - 1)(rng)];
    const auto params = random_block(F, rng);
    const auto x = uniform_tensor<float>(T, F, rng, -2.0, 2.0);
    Tape<float> tape;
    const auto vars = bind_block(tape, params);
    const auto xv = tape.constant(x);
    const Tensor<float> a = mstr_block_forward(xv, vars, T, 1, heads).value();
    const Tensor<float> b = vanilla_block_forward(xv, vars, heads).value();
    worst = std::max(worst, static_cast<double>(max_abs_diff(a, b)));
  }
  return worst;
}

double attention_row_sum_error(std::size_t T, std::size_t F, std::size_t p, std::size_t L,
                               std::size_t heads, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto params = random_block(F, rng);
  Tape<float> tape;
  const auto vars = bind_block(tape, params);
  const auto x = uniform_tensor<float>(T, F, rng, -3.0, 3.0);
  const auto pyramid = build_scale_pyramid(project_qkv(tape.constant(x), vars), p, L);
  double worst = 0.0;
  for (const auto& level : pyramid.levels) {
    const kernels::AttentionGeometry g{level.q.rows(), F, p, heads, attention_scale(F, heads)};
    Tensor<float> out(g.rows, g.cols);
    std::vector<float> probs(g.prob_size());
    kernels::serial::windowed_attention_forward(level.q.value().data(), level.k.value().data(),
                                                level.v.value().data(), out.data(), probs.data(), g);
    for (std::size_t r = 0; r < probs.size() / p; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < p; ++j) sum += probs[r * p + j];
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  return worst;
}

std::string window_locality_violation(std::size_t T, std::size_t F, std::size_t p, std::size_t L,
                                      std::size_t heads, std::span<const std::size_t> frames,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto params = random_block(F, rng);
  const auto x = uniform_tensor<float>(T, F, rng, -1.0, 1.0);
  const auto base = level_outputs(params, x, p, L, heads);
  for (const std::size_t frame : frames) {
    auto perturbed = x;
    for (std::size_t c = 0; c < F; ++c) perturbed(frame, c) += 0.75f;
    const auto pert = level_outputs(params, perturbed, p, L, heads);
    std::size_t stride = 1;
    for (std::size_t k = 0; k < L; ++k, stride *= p) {
      const std::size_t own = frame / stride / p;
      for (std::size_t w = 0; w < base[k].rows() / p; ++w) {
        const bool same = rows_equal(base[k], pert[k], w * p, p);
        if (w != own && !same) {
          return "frame " + std::to_string(frame) + " changed window " + std::to_string(w) +
                 " at level " + std::to_string(k + 1);
        }
        if (w == own && same) {
          return "frame " + std::to_string(frame) + " left its own window unchanged at level " +
                 std::to_string(k + 1);
        }
      }
    }
  }
  return {};
}

double metrics_recount_max_diff(std::size_t n, std::size_t num_classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> cls(0, num_classes - 1);
  std::vector<std::size_t> preds(n), labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    preds[i] = cls(rng);
    labels[i] = cls(rng);
  }
  const auto m = compute_metrics(preds, labels, num_classes);

  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += preds[i] == labels[i];
  const double wa = static_cast<double>(correct) / static_cast<double>(n);
  double ua = 0.0, wf1 = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t tp = 0, support = 0, predicted = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += labels[i] == c && preds[i] == c;
      support += labels[i] == c;
      predicted += preds[i] == c;
    }
    if (support == 0) continue;
    ++present;
    ua += static_cast<double>(tp) / static_cast<double>(support);
    // F1 = 2 tp / (support + predicted), the harmonic mean of precision and recall.
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(support + predicted);
    wf1 += f1 * static_cast<double>(support) / static_cast<double>(n);
  }
  ua /= static_cast<double>(present);
  return std::max({std::abs(m.wa - wa), std::abs(m.ua - ua), std::abs(m.wf1 - wf1)});
}

std::vector<PropertyResult> run_property_suite(const std::filesystem::path& scratch_dir) {
  std::vector<PropertyResult> out;
  std::filesystem::create_directories(scratch_dir);

  {
    bool ok = analytic_flops_vtr(81, 8) == 52488 && analytic_flops_mstr(81, 8, 3, 4) == 8640;
    for (std::uint64_t p = 2; p <= 5; ++p)
      for (std::uint64_t L = 1; L <= 4; ++L) {
        std::uint64_t pl = 1;
        for (std::uint64_t i = 0; i < L; ++i) pl *= p;
        const std::uint64_t T = pl * 2, F = 8;
        ok = ok && analytic_flops_mstr(T, F, p, L) * (p - 1) * pl ==
                       p * p * p * F * T * (pl - 1);
      }
    out.push_back(check("analytic FLOPs formulas", ok, "52488 / 8640 and closed form"));
  }
  {
    bool ok = true;
    std::string detail;
    for (std::size_t T : {27u, 81u, 162u}) {
      const auto vtr = count_attention_macs(Variant::kVanilla, T, 8, 1, 1);
      const auto ms = count_attention_macs(Variant::kMstr, T, 8, 3, 3, 2);
      const auto expected = analytic_flops_mstr(T, 8, 3, 3) / 3;
      ok = ok && vtr[MacComponent::kAttentionScores] == analytic_flops_vtr(T, 8) &&
           vtr[MacComponent::kAttentionValues] == analytic_flops_vtr(T, 8) &&
           ms[MacComponent::kAttentionScores] == expected &&
           ms[MacComponent::kAttentionValues] == expected;
    }
    out.push_back(check("counted attention MACs", ok,
                        "vanilla = T^2 F, windowed = p F sum_k T/p^(k-1) per side"));
  }
  {
    const std::vector<std::size_t> lengths{81, 162, 324, 648};
    const auto s = scaling_report(lengths, 8, 3, 4);
    const bool ok = std::abs(s.vtr_slope - 2.0) <= 0.05 && std::abs(s.mstr_slope - 1.0) <= 0.05;
    out.push_back(check("scaling slopes", ok,
                        fmt("vanilla %.4f", s.vtr_slope) + fmt(", mstr %.4f", s.mstr_slope)));
  }
  {
    const double d = degeneracy_max_diff(20, 11);
    out.push_back(check("L=1, p=T equals vanilla block", d < 1e-6, fmt("max diff %.3g", d)));
  }
  {
    const auto results = run_gradient_suite(0, 1e-4);
    double worst = 0.0;
    bool ok = true;
    for (const auto& r : results) {
      worst = std::max(worst, r.rel_error);
      ok = ok && r.passed;
    }
    out.push_back(check("finite-difference gradients", ok,
                        std::to_string(results.size()) + " cases" + fmt(", worst rel error %.3g", worst)));
  }
  {
    const double e = attention_row_sum_error(81, 16, 3, 4, 4, 21);
    out.push_back(check("attention rows sum to one", e <= 1e-6, fmt("max deviation %.3g", e)));
    const std::vector<std::size_t> frames{0, 13, 40, 80};
    const auto violation = window_locality_violation(81, 8, 3, 4, 2, frames, 22);
    out.push_back(check("window locality", violation.empty(),
                        violation.empty() ? "4 frames, 4 levels, bitwise" : violation));
  }
  {
    bool ok = true;
    for (std::size_t F : {8u, 16u, 64u}) {
      MstrConfig c;
      c.model_dim = F;
      c.heads = F / 4;
      auto v = c;
      v.variant = Variant::kVanilla;
      ok = ok && parameter_count(c) == parameter_count(v) &&
           init_params<float>(c, 0).parameter_count() == parameter_count(c) &&
           init_params<float>(v, 0).parameter_count() == parameter_count(c);
    }
    out.push_back(check("parameter parity", ok, "mstr = vanilla = allocated"));
  }
  {
    std::mt19937_64 rng(31);
    const auto t = uniform_tensor<float>(7, 5, rng, -10.0, 10.0);
    const auto path = scratch_dir / "roundtrip.msf";
    write_feature_file(path, t);
    const bool msf = read_feature_file(path) == t;

    MstrConfig c = tiny_gradcheck_config();
    const auto params = init_params<float>(c, 5);
    const auto ckpt_path = scratch_dir / "roundtrip.ckpt";
    write_checkpoint(ckpt_path, c, params);
    const auto loaded = read_checkpoint(ckpt_path);
    const bool ckpt = loaded.config == c && loaded.params == params &&
                      encode_checkpoint(loaded.config, loaded.params) == file_bytes(ckpt_path);
    out.push_back(check("MSF1 and checkpoint round trips", msf && ckpt,
                        std::string("features ") + (msf ? "ok" : "differ") + ", checkpoint " +
                            (ckpt ? "ok" : "differs")));
  }
  {
    SyntheticSpec spec;
    spec.samples_per_class = 10;
    const auto ds = generate_synthetic_dataset(spec, 3, 3, 2);
    MstrConfig c;
    c.input_dim = spec.input_dim;
    c.num_classes = spec.num_classes;
    c.model_dim = 8;
    c.heads = 2;
    c.blocks = 1;
    c.levels = 2;
    TrainConfig t;
    t.epochs = 2;
    t.seeds = {0};
    t.dropout_rate = 0.1;
    const auto a = history_csv(train(c, t, ds).history);
    const auto b = history_csv(train(c, t, ds).history);
    out.push_back(check("training history deterministic", a == b,
                        std::to_string(a.size()) + " bytes"));
  }
  {
    const double d = metrics_recount_max_diff(1000, 6, 41);
    out.push_back(check("metrics match recount", d <= 1e-12, fmt("max diff %.3g", d)));
  }
  return out;
}

std::string property_table(std::span<const PropertyResult> results) {
  std::size_t width = 8;
  for (const auto& r : results) width = std::max(width, r.name.size());
  std::ostringstream out;
  for (const auto& r : results) {
    out << (r.passed ? "PASS  " : "FAIL  ") << r.name << std::string(width - r.name.size() + 2, ' ')
        << r.detail << '\n';
  }
  return out.str();
}

}  // namespace mstr
