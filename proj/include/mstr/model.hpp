#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mstr/block.hpp"
#include "mstr/tape.hpp"
#include "mstr/tensor.hpp"

namespace mstr {

enum class Variant : std::uint8_t { kMstr = 0, kVanilla = 1 };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

/// Architecture hyperparameters. Zero-valued widths resolve to their defaults
/// (d_ff = 4F, classifier F -> F/2 -> F/4 -> C).
struct MstrConfig {
  std::size_t input_dim = 40;
  std::size_t model_dim = 64;
  std::size_t p = 3;
  std::size_t levels = 4;
  std::size_t heads = 16;
  std::size_t blocks = 4;
  std::size_t num_classes = 4;
  std::size_t d_ff = 0;
  std::size_t fc1_width = 0;
  std::size_t fc2_width = 0;
  bool use_positional = true;
  double dropout_rate = 0.0;
  Variant variant = Variant::kMstr;

  std::size_t ffn_width() const { return d_ff != 0 ? d_ff : 4 * model_dim; }
  std::size_t classifier_hidden1() const { return fc1_width != 0 ? fc1_width : model_dim / 2; }
  std::size_t classifier_hidden2() const { return fc2_width != 0 ? fc2_width : model_dim / 4; }

  /// Input lengths must be multiples of this (p^L for mstr, 1 for vanilla).
  std::size_t time_multiple() const;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  bool operator==(const MstrConfig&) const = default;
};

template <typename T>
struct ModelParams {
  Tensor<T> input_proj;  // input_dim x F
  std::vector<BlockParams<T>> blocks;
  Tensor<T> fc1_w, fc1_b, fc2_w, fc2_b, fc3_w, fc3_b;

  /// Canonical tensor order: input_proj, each block's tensors, fc1..fc3 (w, b).
  template <typename Fn>
  void for_each(Fn&& fn) {
    fn(input_proj);
    for (auto& b : blocks) b.for_each(fn);
    for (Tensor<T>* t : {&fc1_w, &fc1_b, &fc2_w, &fc2_b, &fc3_w, &fc3_b}) fn(*t);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    fn(input_proj);
    for (const auto& b : blocks) b.for_each(fn);
    for (const Tensor<T>* t : {&fc1_w, &fc1_b, &fc2_w, &fc2_b, &fc3_w, &fc3_b}) fn(*t);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&n](const Tensor<T>& t) { n += t.size(); });
    return n;
  }

  std::size_t tensor_count() const {
    std::size_t n = 0;
    for_each([&n](const Tensor<T>&) { ++n; });
    return n;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out{input_proj.template cast<U>(), {}, fc1_w.template cast<U>(),
                       fc1_b.template cast<U>(), fc2_w.template cast<U>(),
                       fc2_b.template cast<U>(), fc3_w.template cast<U>(),
                       fc3_b.template cast<U>()};
    for (const auto& b : blocks) {
      out.blocks.push_back(BlockParams<U>{
          b.w_q.template cast<U>(), b.w_k.template cast<U>(), b.w_v.template cast<U>(),
          b.w_o.template cast<U>(), b.ffn_w1.template cast<U>(), b.ffn_b1.template cast<U>(),
          b.ffn_w2.template cast<U>(), b.ffn_b2.template cast<U>(),
          b.ln1_gamma.template cast<U>(), b.ln1_beta.template cast<U>(),
          b.ln2_gamma.template cast<U>(), b.ln2_beta.template cast<U>()});
    }
    return out;
  }

  bool operator==(const ModelParams&) const = default;
};

template <typename T>
struct ModelVars {
  Var<T> input_proj;
  std::vector<BlockVars<T>> blocks;
  Var<T> fc1_w, fc1_b, fc2_w, fc2_b, fc3_w, fc3_b;
  /// Same order as ModelParams::for_each.
  std::vector<Var<T>> flat;
};

/// Parameter count implied by a config; identical for both variants.
std::size_t parameter_count(const MstrConfig& config);

/// Glorot-uniform limit sqrt(6 / (fan_in + fan_out)).
double glorot_limit(std::size_t fan_in, std::size_t fan_out);

/// Glorot-uniform matrices, zero biases and betas, unit gammas.
template <typename T>
ModelParams<T> init_params(const MstrConfig& config, std::uint64_t seed);

template <typename T>
ModelVars<T> bind_model(Tape<T>& tape, const ModelParams<T>& params);

/// Standard sin/cos absolute position table, rows x width.
template <typename T>
Tensor<T> sinusoidal_encoding(std::size_t rows, std::size_t width);

/// Logits (1 x C) for one padded sequence. Only rows [0, valid_len) enter
/// the final mean pooling.
template <typename T>
Var<T> model_forward(Tape<T>& tape, const Tensor<T>& features, std::size_t valid_len,
                     const ModelVars<T>& vars, const MstrConfig& config,
                     const ForwardContext& ctx = {});

/// Inference helper that builds a throwaway tape.
template <typename T>
Tensor<T> predict_logits(const Tensor<T>& features, std::size_t valid_len,
                         const ModelParams<T>& params, const MstrConfig& config);

/// Index of the largest logit; ties resolve to the lowest index.
template <typename T>
std::size_t argmax(const Tensor<T>& logits);

}  // namespace mstr
