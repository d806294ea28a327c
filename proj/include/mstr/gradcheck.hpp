#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mstr/model.hpp"
#include "mstr/tape.hpp"
#include "mstr/tensor.hpp"

namespace mstr {

/// Builds an output from leaf handles on a fresh tape. Any shape is allowed;
/// the checker reduces it to a scalar with fixed random weights.
using GradFn = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

struct GradCheckResult {
  std::string name;
  std::size_t elements = 0;  // input entries perturbed
  double rel_error = 0.0;
  bool passed = false;
};

/// ||analytic - numeric|| / max(||analytic||, ||numeric||) over all inputs,
/// with central differences of step h. Zero when both gradients vanish.
double gradient_relative_error(const GradFn& fn, std::span<const Tensor<double>> inputs,
                               double h = 1e-5, std::uint64_t weight_seed = 7);

/// Dims for the end-to-end check: T=27, F=8, p=3, L=3, one block, three classes.
MstrConfig tiny_gradcheck_config();

/// Every differentiable primitive, the block-level compositions and the
/// end-to-end classification loss.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed = 0, double tolerance = 1e-4);

std::string gradcheck_table(std::span<const GradCheckResult> results);

}  // namespace mstr
