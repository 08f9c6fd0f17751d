#pragma once

// Reverse-mode differentiation over a recorded tape of the handful of ops the
// DeepLight model needs. Not a general autodiff engine.

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "deeplight/tensor.hpp"

namespace deeplight::nn {

/// Named, shape-fixed tensors. Insertion order is the canonical order.
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const;
  const std::string& name(std::size_t i) const { return names_.at(i); }

  Tensor& operator[](std::size_t i) { return tensors_.at(i); }
  const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
  Tensor& at(std::string_view name) { return tensors_[index(name)]; }
  const Tensor& at(std::string_view name) const { return tensors_[index(name)]; }

  /// Zero tensors with identical names and shapes.
  ParamSet zeros_like() const;
  std::size_t total_size() const;
  bool same_layout(const ParamSet& other) const;

  bool operator==(const ParamSet& other) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

/// One gradient tensor per parameter, shape-parallel to its ParamSet.
using GradientSet = ParamSet;

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  Tape() = default;
  /// With `track_gradients` false no backward closures are recorded (inference).
  explicit Tape(bool track_gradients) : track_(track_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Constant input; no gradient flows into it.
  Var constant(Tensor value);
  /// Differentiable leaf bound to parameter `index` of `params`.
  Var param(const ParamSet& params, std::size_t index);
  Var param(const ParamSet& params, std::string_view name) { return param(params, params.index(name)); }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  Var conv2d(Var input, Var kernels, Var bias, std::size_t stride);
  Var linear(Var weights, Var x, Var bias);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var tanh(Var x);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var concat(Var a, Var b);
  /// Row `i` of a rank-2 tensor, returned as a vector.
  Var row(Var x, std::size_t i);
  Var reshape(Var x, Shape shape);
  /// Elementwise product with a fixed mask (inverted dropout).
  Var scale(Var x, const Tensor& mask);
  Var sum(Var x);
  /// Cross-entropy of softmax(logits) against class `label`; scalar.
  Var softmax_cross_entropy(Var logits, std::size_t label);

  /// Backpropagate from a scalar node. Throws std::invalid_argument for
  /// non-scalar losses.
  void backward(Var loss);

  /// Sign pattern of every ReLU input on the tape; used by finite-difference
  /// checks to detect perturbations that cross a kink.
  std::vector<bool> relu_pattern() const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> backprop;
    long param_index = -1;
    bool needs_grad = false;
    bool is_relu = false;
  };

  Var push(Tensor value, bool needs_grad);
  Tensor& grad_of(std::size_t id);

  std::vector<Node> nodes_;
  std::vector<std::size_t> relu_inputs_;
  bool track_ = true;

  friend GradientSet reverse_gradient(Tape&, Var, const ParamSet&);
};

/// Runs backward from `loss` and gathers parameter gradients (zero for
/// parameters that were not placed on the tape).
GradientSet reverse_gradient(Tape& tape, Var loss, const ParamSet& params);

}  // namespace deeplight::nn
