#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mstr {

/// WA is micro accuracy, UA the mean recall over classes with support, WF1 the
/// support-weighted mean F1. confusion[true][predicted].
struct EvalMetrics {
  double wa = 0.0;
  double ua = 0.0;
  double wf1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<std::size_t> zero_support_classes;

  std::size_t total() const;
};

EvalMetrics compute_metrics(std::span<const std::size_t> predictions,
                            std::span<const std::size_t> labels, std::size_t num_classes);

}  // namespace mstr
