#include "mstr/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "mstr/block.hpp"
#include "mstr/ops.hpp"

namespace mstr {
namespace {

Tensor<double> random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                             double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(rows, cols);
  for (auto& x : t.values()) x = dist(rng);
  return t;
}

double scalar_output(const GradFn& fn, std::span<const Tensor<double>> inputs,
                     const Tensor<double>* weights) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  Var<double> out = fn(tape, vars);
  return dot_constant(out, *weights).value()[0];
}

struct Case {
  std::string name;
  GradFn fn;
  std::vector<Tensor<double>> inputs;
};

}  // namespace

double gradient_relative_error(const GradFn& fn, std::span<const Tensor<double>> inputs,
                               double h, std::uint64_t weight_seed) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.parameter(t));
  Var<double> out = fn(tape, vars);
  std::mt19937_64 rng(weight_seed);
  const Tensor<double> weights = random_tensor(out.rows(), out.cols(), rng);
  tape.backward(dot_constant(out, weights));

  std::vector<Tensor<double>> work(inputs.begin(), inputs.end());
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const Tensor<double>& analytic = tape.grad(vars[i].id);
    for (std::size_t j = 0; j < work[i].size(); ++j) {
      const double orig = work[i][j];
      work[i][j] = orig + h;
      const double up = scalar_output(fn, work, &weights);
      work[i][j] = orig - h;
      const double down = scalar_output(fn, work, &weights);
      work[i][j] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[j];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
  }
  const double denom = std::sqrt(std::max(a2, n2));
  return denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
}

MstrConfig tiny_gradcheck_config() {
  MstrConfig c;
  c.input_dim = 4;
  c.model_dim = 8;
  c.p = 3;
  c.levels = 3;
  c.heads = 2;
  c.blocks = 1;
  c.num_classes = 3;
  return c;
}

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, double tolerance) {
  std::mt19937_64 rng(seed);
  auto rnd = [&rng](std::size_t r, std::size_t c) { return random_tensor(r, c, rng); };
  using V = Var<double>;
  using In = std::span<const V>;

  std::vector<Case> cases;
  cases.push_back({"matmul", [](Tape<double>&, In v) { return matmul(v[0], v[1]); },
                   {rnd(4, 5), rnd(5, 3)}});
  cases.push_back({"add", [](Tape<double>&, In v) { return add(v[0], v[1]); },
                   {rnd(3, 4), rnd(3, 4)}});
  cases.push_back({"add_bias", [](Tape<double>&, In v) { return add_bias(v[0], v[1]); },
                   {rnd(5, 4), rnd(1, 4)}});
  cases.push_back({"scale", [](Tape<double>&, In v) { return scale(v[0], -1.7); }, {rnd(3, 3)}});
  cases.push_back({"gelu", [](Tape<double>&, In v) { return gelu(v[0]); },
                   {random_tensor(4, 4, rng, -3.0, 3.0)}});
  cases.push_back({"softmax_rows", [](Tape<double>&, In v) { return softmax_rows(v[0]); },
                   {random_tensor(4, 6, rng, -3.0, 3.0)}});
  cases.push_back({"layer_norm",
                   [](Tape<double>&, In v) { return layer_norm(v[0], v[1], v[2]); },
                   {rnd(5, 6), random_tensor(1, 6, rng, 0.5, 1.5), rnd(1, 6)}});
  cases.push_back({"avg_pool_time", [](Tape<double>&, In v) { return avg_pool_time(v[0], 3); },
                   {rnd(9, 4)}});
  cases.push_back({"upsample_nearest_time",
                   [](Tape<double>&, In v) { return upsample_nearest_time(v[0], 3); },
                   {rnd(3, 4)}});
  cases.push_back({"transpose", [](Tape<double>&, In v) { return transpose(v[0]); }, {rnd(3, 5)}});
  cases.push_back({"slice_cols", [](Tape<double>&, In v) { return slice_cols(v[0], 1, 3); },
                   {rnd(4, 6)}});
  cases.push_back({"concat_cols", [](Tape<double>&, In v) { return concat_cols<double>(v); },
                   {rnd(4, 2), rnd(4, 3), rnd(4, 1)}});
  cases.push_back({"mean_rows", [](Tape<double>&, In v) { return mean_rows(v[0], 4); },
                   {rnd(6, 3)}});
  cases.push_back({"sum_all", [](Tape<double>&, In v) { return sum_all(v[0]); }, {rnd(3, 4)}});
  {
    const Tensor<double> w = rnd(3, 4);
    cases.push_back({"dot_constant", [w](Tape<double>&, In v) { return dot_constant(v[0], w); },
                     {rnd(3, 4)}});
  }
  cases.push_back({"cross_entropy", [](Tape<double>&, In v) { return cross_entropy(v[0], 2); },
                   {random_tensor(1, 5, rng, -2.0, 2.0)}});
  cases.push_back({"dropout",
                   [](Tape<double>&, In v) {
                     std::mt19937_64 mask_rng(99);
                     return dropout(v[0], 0.3, mask_rng);
                   },
                   {rnd(5, 4)}});
  cases.push_back({"windowed_attention",
                   [](Tape<double>&, In v) {
                     return windowed_attention(v[0], v[1], v[2], 3, 2, attention_scale(4, 2));
                   },
                   {rnd(9, 4), rnd(9, 4), rnd(9, 4)}});
  cases.push_back({"full_attention",
                   [](Tape<double>&, In v) { return full_attention(Qkv<double>{v[0], v[1], v[2]}, 2); },
                   {rnd(6, 4), rnd(6, 4), rnd(6, 4)}});
  cases.push_back({"scale_mix",
                   [](Tape<double>&, In v) {
                     const std::vector<V> ys{v[0], v[1], v[2]};
                     const std::vector<std::size_t> s{1, 3, 9};
                     return scale_mix<double>(ys, s, v[3], 9);
                   },
                   {rnd(9, 4), rnd(3, 4), rnd(1, 4), rnd(4, 4)}});

  const MstrConfig tiny = tiny_gradcheck_config();
  const auto block_params = init_params<double>(tiny, seed).blocks.front();
  std::vector<Tensor<double>> block_inputs{rnd(27, tiny.model_dim)};
  block_params.for_each([&block_inputs](const Tensor<double>& t) { block_inputs.push_back(t); });
  auto unpack_block = [](In v) {
    return BlockVars<double>{v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11], v[12]};
  };
  cases.push_back({"mstr_block",
                   [unpack_block, tiny](Tape<double>&, In v) {
                     return mstr_block_forward(v[0], unpack_block(v), tiny.p, tiny.levels, tiny.heads);
                   },
                   block_inputs});
  cases.push_back({"vanilla_block",
                   [unpack_block, tiny](Tape<double>&, In v) {
                     return vanilla_block_forward(v[0], unpack_block(v), tiny.heads);
                   },
                   block_inputs});

  const auto model_params = init_params<double>(tiny, seed + 1);
  std::vector<Tensor<double>> model_inputs;
  model_params.for_each([&model_inputs](const Tensor<double>& t) { model_inputs.push_back(t); });
  const Tensor<double> features = rnd(27, tiny.input_dim);
  cases.push_back({"end_to_end_loss",
                   [tiny, features, model_params](Tape<double>& tape, In v) {
                     ModelParams<double> shape = model_params;
                     ModelVars<double> vars = bind_model(tape, shape);
                     // Route the checker's leaves in place of the bound parameters.
                     std::size_t i = 0;
                     vars.input_proj = v[i++];
                     for (auto& b : vars.blocks) {
                       for (V* slot : {&b.w_q, &b.w_k, &b.w_v, &b.w_o, &b.ffn_w1, &b.ffn_b1,
                                       &b.ffn_w2, &b.ffn_b2, &b.ln1_gamma, &b.ln1_beta,
                                       &b.ln2_gamma, &b.ln2_beta})
                         *slot = v[i++];
                     }
                     for (V* slot : {&vars.fc1_w, &vars.fc1_b, &vars.fc2_w, &vars.fc2_b,
                                     &vars.fc3_w, &vars.fc3_b})
                       *slot = v[i++];
                     return cross_entropy(model_forward(tape, features, 25, vars, tiny), 1);
                   },
                   model_inputs});

  std::vector<GradCheckResult> results;
  for (const auto& c : cases) {
    GradCheckResult r;
    r.name = c.name;
    for (const auto& t : c.inputs) r.elements += t.size();
    r.rel_error = gradient_relative_error(c.fn, c.inputs);
    r.passed = r.rel_error < tolerance;
    results.push_back(r);
  }
  return results;
}

std::string gradcheck_table(std::span<const GradCheckResult> results) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-24s %8s %12s  %s\n", "op", "inputs", "rel_error", "status");
  out << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-24s %8zu %12.3e  %s\n", r.name.c_str(), r.elements,
                  r.rel_error, r.passed ? "PASS" : "FAIL");
    out << line;
  }
  return out.str();
}

}  // namespace mstr
