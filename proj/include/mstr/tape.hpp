#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mstr/errors.hpp"
#include "mstr/mac_counter.hpp"
#include "mstr/tensor.hpp"

namespace mstr {

enum class OpKind {
  kConstant,
  kParameter,
  kMatmul,
  kAdd,
  kAddBias,
  kScale,
  kGelu,
  kSoftmaxRows,
  kLayerNorm,
  kAvgPoolTime,
  kUpsampleNearestTime,
  kTranspose,
  kSliceCols,
  kConcatCols,
  kMeanRows,
  kSumAll,
  kDotConstant,
  kCrossEntropy,
  kDropout,
  kWindowedAttention,
};

template <typename T>
class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode tape. Nodes are appended in execution order, so node ids
/// increase strictly and every input id is smaller than its consumer's id.
template <typename T>
class Tape {
 public:
  /// Called with the tape and the node's own id. Reads grad(self) and
  /// accumulates into the inputs that require gradients.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    bool requires_grad = false;
    bool is_parameter = false;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) {
    nodes_.push_back(Node{OpKind::kConstant, {}, std::move(value), std::nullopt, false, false, {}});
    return {this, nodes_.size() - 1};
  }

  Var<T> parameter(Tensor<T> value) {
    nodes_.push_back(Node{OpKind::kParameter, {}, std::move(value), std::nullopt, true, true, {}});
    return {this, nodes_.size() - 1};
  }

  Var<T> record(OpKind kind, std::vector<std::size_t> inputs, Tensor<T> value, BackwardFn fn) {
    bool needs = false;
    for (auto in : inputs) {
      if (in >= nodes_.size()) throw ContractError("tape input id refers to a future node");
      needs = needs || nodes_[in].requires_grad;
    }
    if (!needs) fn = nullptr;
    nodes_.push_back(Node{kind, std::move(inputs), std::move(value), std::nullopt, needs, false,
                          std::move(fn)});
    return {this, nodes_.size() - 1};
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient of the last backward() loss w.r.t. node `id`.
  const Tensor<T>& grad(std::size_t id) const {
    const auto& n = nodes_.at(id);
    if (!n.grad) throw ContractError("no gradient recorded for node " + std::to_string(id));
    return *n.grad;
  }

  /// Adds `g` into the gradient of `id` if that node takes part in differentiation.
  void accumulate(std::size_t id, const Tensor<T>& g) {
    auto& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.grad) throw ContractError("gradient buffer missing during backward");
    auto dst = n.grad->values();
    auto src = g.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  /// Mutable gradient buffer, or nullptr if the node does not need one.
  Tensor<T>* grad_buffer(std::size_t id) {
    auto& n = nodes_[id];
    return n.requires_grad && n.grad ? &*n.grad : nullptr;
  }

  void backward(Var<T> loss) {
    if (loss.tape != this) throw ContractError("loss belongs to another tape");
    const auto& lv = value(loss.id);
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ContractError("backward requires a scalar 1x1 loss, got " + lv.shape());
    }
    // Reset every buffer so repeated calls produce identical gradients.
    for (std::size_t i = 0; i <= loss.id; ++i) {
      auto& n = nodes_[i];
      if (n.requires_grad) {
        n.grad.emplace(n.value.rows(), n.value.cols());
      } else {
        n.grad.reset();
      }
    }
    if (!nodes_[loss.id].requires_grad) return;
    (*nodes_[loss.id].grad)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.requires_grad && n.backward) n.backward(*this, i);
    }
  }

  std::vector<std::size_t> parameter_ids() const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].is_parameter) ids.push_back(i);
    return ids;
  }

  MacCounter& counter() noexcept { return counter_; }
  const MacCounter& counter() const noexcept { return counter_; }

 private:
  std::vector<Node> nodes_;
  MacCounter counter_;
};

}  // namespace mstr
