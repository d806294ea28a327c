#include "mstr/metrics.hpp"

#include <string>

#include "mstr/errors.hpp"

namespace mstr {

std::size_t EvalMetrics::total() const {
  std::size_t n = 0;
  for (const auto& row : confusion)
    for (auto c : row) n += c;
  return n;
}

EvalMetrics compute_metrics(std::span<const std::size_t> predictions,
                            std::span<const std::size_t> labels, std::size_t num_classes) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("compute_metrics: " + std::to_string(predictions.size()) +
                         " predictions for " + std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw EmptyInputError("compute_metrics: no samples");
  EvalMetrics m;
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw ContractError("compute_metrics: class id outside [0, " + std::to_string(num_classes) +
                          ")");
    }
    ++m.confusion[labels[i]][predictions[i]];
  }

  const double n = static_cast<double>(labels.size());
  std::size_t correct = 0;
  double recall_sum = 0.0;
  std::size_t supported = 0;
  double wf1 = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t tp = m.confusion[c][c];
    std::size_t support = 0, predicted = 0;
    for (std::size_t j = 0; j < num_classes; ++j) {
      support += m.confusion[c][j];
      predicted += m.confusion[j][c];
    }
    correct += tp;
    if (support == 0) {
      m.zero_support_classes.push_back(c);
      continue;
    }
    ++supported;
    const double recall = static_cast<double>(tp) / static_cast<double>(support);
    const double precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
    recall_sum += recall;
    const double f1 = precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    wf1 += f1 * static_cast<double>(support) / n;
  }
  m.wa = static_cast<double>(correct) / n;
  m.ua = recall_sum / static_cast<double>(supported);
  m.wf1 = wf1;
  return m;
}

}  // namespace mstr
