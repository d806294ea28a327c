#include "mstr/complexity.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "mstr/block.hpp"
#include "mstr/errors.hpp"
#include "mstr/ops.hpp"

namespace mstr {
namespace {

std::uint64_t checked_pow(std::uint64_t base, std::uint64_t exp) {
  std::uint64_t r = 1;
  for (std::uint64_t i = 0; i < exp; ++i) r *= base;
  return r;
}

Tensor<float> random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Tensor<float> t(rows, cols);
  for (auto& x : t.values()) x = dist(rng);
  return t;
}

std::string format_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::uint64_t analytic_flops_vtr(std::uint64_t T, std::uint64_t F) {
  if (T == 0 || F == 0) throw ConfigError("analytic_flops_vtr: T and F must be >= 1");
  return T * T * F;
}

std::uint64_t analytic_flops_mstr(std::uint64_t T, std::uint64_t F, std::uint64_t p,
                                  std::uint64_t L) {
  if (T == 0 || F == 0 || p == 0 || L == 0) {
    throw ConfigError("analytic_flops_mstr: T, F, p and L must be >= 1");
  }
  const std::uint64_t coarsest = checked_pow(p, L - 1);
  if (T % coarsest != 0) {
    throw ConfigError("analytic_flops_mstr: T = " + std::to_string(T) +
                      " is not divisible by p^(L-1) = " + std::to_string(coarsest));
  }
  std::uint64_t sum = 0;
  std::uint64_t s = 1;
  for (std::uint64_t k = 0; k < L; ++k, s *= p) sum += (T / s) * p * p * F;
  return sum;
}

std::uint64_t MacBreakdown::total() const {
  std::uint64_t t = 0;
  for (auto v : by_component) t += v;
  return t;
}

MacBreakdown count_empirical_macs(const MacCounter& counter) {
  if (!counter.enabled()) {
    throw ContractError("count_empirical_macs: the MAC counter was not enabled for this run");
  }
  MacBreakdown b;
  for (std::size_t i = 0; i < kMacComponentCount; ++i) {
    b.by_component[i] = counter.count(static_cast<MacComponent>(i));
  }
  return b;
}

MacBreakdown count_attention_macs(Variant variant, std::size_t T, std::size_t F, std::size_t p,
                                  std::size_t L, std::size_t heads) {
  std::mt19937_64 rng(0x5EED);
  Tape<float> tape;
  tape.counter().enable();
  const Qkv<float> qkv{tape.constant(random_matrix(T, F, rng)),
                       tape.constant(random_matrix(T, F, rng)),
                       tape.constant(random_matrix(T, F, rng))};
  if (variant == Variant::kVanilla) {
    full_attention(qkv, heads);
  } else {
    const std::uint64_t multiple = checked_pow(p, L);
    if (p < 2 || T % multiple != 0) {
      throw ConfigError("count_attention_macs: T = " + std::to_string(T) +
                        " must be a multiple of p^L = " + std::to_string(multiple));
    }
    const auto pyramid = build_scale_pyramid(qkv, p, L);
    for (const auto& level : pyramid.levels) fractal_attention_scale(level, p, heads);
  }
  return count_empirical_macs(tape.counter());
}

MacBreakdown count_model_macs(const MstrConfig& config, std::size_t T) {
  config.validate();
  const auto params = init_params<float>(config, 0);
  std::mt19937_64 rng(0x5EED);
  const Tensor<float> features = random_matrix(T, config.input_dim, rng);
  Tape<float> tape;
  tape.counter().enable();
  const auto vars = bind_model(tape, params);
  model_forward(tape, features, T, vars, config);
  return count_empirical_macs(tape.counter());
}

std::string_view to_string(FlopsScope s) {
  return s == FlopsScope::kAttentionOnly ? "attention-only" : "full-model";
}

double reduction_percent(std::uint64_t mstr, std::uint64_t vtr) {
  if (vtr == 0) throw ContractError("reduction_percent: vanilla cost is zero");
  return 100.0 * (1.0 - static_cast<double>(mstr) / static_cast<double>(vtr));
}

FlopsReport flops_report(std::size_t T, std::size_t F, std::size_t p, std::size_t L,
                         std::size_t heads) {
  FlopsReport r;
  r.T = T;
  r.F = F;
  r.p = p;
  r.L = L;
  r.analytic_vtr = analytic_flops_vtr(T, F);
  r.analytic_mstr = analytic_flops_mstr(T, F, p, L);
  r.counted_vtr_macs =
      count_attention_macs(Variant::kVanilla, T, F, p, L, heads)[MacComponent::kAttentionScores];
  r.counted_mstr_macs =
      count_attention_macs(Variant::kMstr, T, F, p, L, heads)[MacComponent::kAttentionScores];
  r.reduction_pct = reduction_percent(r.analytic_mstr, r.analytic_vtr);
  r.scope = FlopsScope::kAttentionOnly;
  return r;
}

FlopsReport full_model_flops_report(const MstrConfig& config, std::size_t T) {
  MstrConfig mstr_cfg = config;
  mstr_cfg.variant = Variant::kMstr;
  MstrConfig vtr_cfg = config;
  vtr_cfg.variant = Variant::kVanilla;
  FlopsReport r;
  r.T = T;
  r.F = config.model_dim;
  r.p = config.p;
  r.L = config.levels;
  r.analytic_vtr = analytic_flops_vtr(T, config.model_dim);
  r.analytic_mstr = analytic_flops_mstr(T, config.model_dim, config.p, config.levels);
  r.counted_vtr_macs = count_model_macs(vtr_cfg, T).total();
  r.counted_mstr_macs = count_model_macs(mstr_cfg, T).total();
  r.reduction_pct = reduction_percent(r.counted_mstr_macs, r.counted_vtr_macs);
  r.scope = FlopsScope::kFullModel;
  return r;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("loglog_slope: x and y differ in length");
  if (x.size() < 2) throw EmptyInputError("loglog_slope: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ContractError("loglog_slope: values must be > 0");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw ContractError("loglog_slope: x values are all equal");
  return sxy / sxx;
}

ScalingReport scaling_report(std::span<const std::size_t> lengths, std::size_t F, std::size_t p,
                             std::size_t L, std::size_t heads) {
  ScalingReport report;
  std::vector<double> xs, vtr, mstr;
  for (const auto T : lengths) {
    report.rows.push_back(flops_report(T, F, p, L, heads));
    xs.push_back(static_cast<double>(T));
    vtr.push_back(static_cast<double>(report.rows.back().counted_vtr_macs));
    mstr.push_back(static_cast<double>(report.rows.back().counted_mstr_macs));
  }
  report.vtr_slope = loglog_slope(xs, vtr);
  report.mstr_slope = loglog_slope(xs, mstr);
  return report;
}

std::string flops_csv(std::span<const FlopsReport> rows) {
  std::ostringstream out;
  out << "T,F,p,L,variant,analytic,counted,reduction_pct\n";
  for (const auto& r : rows) {
    const std::string prefix = std::to_string(r.T) + ',' + std::to_string(r.F) + ',' +
                               std::to_string(r.p) + ',' + std::to_string(r.L) + ',';
    out << prefix << "vanilla," << r.analytic_vtr << ',' << r.counted_vtr_macs << ",0.00\n";
    out << prefix << "mstr," << r.analytic_mstr << ',' << r.counted_mstr_macs << ','
        << format_pct(r.reduction_pct) << '\n';
  }
  return out.str();
}

std::string flops_table(std::span<const FlopsReport> rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%6s %4s %3s %3s %-8s %14s %14s %9s  %s\n", "T", "F", "p", "L",
                "variant", "analytic", "counted", "reduc.%", "scope");
  out << line;
  for (const auto& r : rows) {
    const auto scope = std::string(to_string(r.scope));
    std::snprintf(line, sizeof line, "%6zu %4zu %3zu %3zu %-8s %14llu %14llu %9s  %s\n", r.T, r.F,
                  r.p, r.L, "vanilla", static_cast<unsigned long long>(r.analytic_vtr),
                  static_cast<unsigned long long>(r.counted_vtr_macs), "0.00", scope.c_str());
    out << line;
    std::snprintf(line, sizeof line, "%6zu %4zu %3zu %3zu %-8s %14llu %14llu %9s  %s\n", r.T, r.F,
                  r.p, r.L, "mstr", static_cast<unsigned long long>(r.analytic_mstr),
                  static_cast<unsigned long long>(r.counted_mstr_macs),
                  format_pct(r.reduction_pct).c_str(), scope.c_str());
    out << line;
  }
  return out.str();
}

}  // namespace mstr
