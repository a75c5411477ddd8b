#pragma once

// Minimal reverse-mode differentiation over dense rank-2 tensors.
//
// A Tape records operations eagerly as they are applied (define-by-run), so
// the recording order is a topological order. backward() walks it once in
// reverse. A tape serves one step: record, backward once, reset.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clarinet/tensor.hpp"

namespace clarinet::ad {

/// Trainable tensor with its gradient slot. Optimizer state (momentum) lives in
/// the optimizer that steps it.
struct Parameter {
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct BackwardContext {
  const Tensor& out_grad;
  const Tensor& out_value;
  std::vector<const Tensor*> in_values;
  /// nullptr where the input does not require a gradient.
  std::vector<Tensor*> in_grads;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf without gradient.
  Var constant(Tensor value);
  /// Differentiable leaf; its gradient is readable through grad() after backward.
  Var input(Tensor value);
  /// Leaf bound to a parameter. Registering the same parameter twice returns
  /// the same node, so gradients from all uses accumulate.
  Var parameter(Parameter& p);

  /// Append an operation. `value` is the already computed forward result.
  /// Throws NumericError when it is not finite.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar output. Writes every registered parameter's
  /// grad (zero when the output does not depend on it). One call per tape.
  void backward(Var output);

  /// Gradient of the last backward output with respect to `v` (zeros if unreached).
  Tensor grad(Var v) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }
  void reset();

  /// Names of the ops recorded so far, in order (leaves excluded).
  std::vector<std::string_view> recorded_ops() const;

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

/// Gradients of `output` with respect to `params`, in order. Parameters the
/// output does not depend on get zero tensors. Runs tape.backward().
std::vector<Tensor> gradients(Var output, std::span<Parameter* const> params);

// Differentiable operations. All take and return rank-2 tensors; "rows" means
// samples and every row-wise op acts on each row independently.

Var matmul(Var a, Var b);
Var add_bias(Var x, Var bias);
Var affine(Var x, Var weight, Var bias);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double c);
Var sum(Var x);
Var relu(Var x);
Var sigmoid(Var x);
/// ln(sigmoid(x)), floored at `floor` (zero gradient below the floor).
Var log_sigmoid(Var x, double floor);
Var softmax(Var x);
/// Row-wise log-softmax floored at `floor` (zero gradient below the floor).
Var log_softmax(Var x, double floor);
/// ln(max(x, eps)); zero gradient where clamped.
Var log(Var x, double eps);
/// Row-wise temperature map: f_k^(1/l) / sum_j f_j^(1/l), with f clamped at 1e-12.
Var scatter_map(Var probs, double l);
/// Row-wise flattened outer product: out(i, a*K + b) = u(i, a) * v(i, b).
Var outer_flatten(Var u, Var v);
/// Identity forward; backward multiplies the incoming gradient by -lambda.
Var grad_reverse(Var x, double lambda);
/// Scalar sum_ij coeffs(i,j) * x(i,j) with constant coefficients.
Var linear_combination(Var x, const Tensor& coeffs);
Var concat_rows(Var a, Var b);
Var slice_rows(Var x, std::size_t begin, std::size_t end);

/// Every op name the tape can record. The gradient audit covers each of them.
std::span<const std::string_view> differentiable_ops();

/// Probability floor applied before any logarithm.
inline constexpr double kProbFloor = 1e-12;
double log_prob_floor();

namespace fault {
/// Test fixture: perturbs the scatter_map backward pass so gradient audits fail.
void corrupt_scatter_map_gradient(bool on);
bool scatter_map_gradient_corrupted();
}  // namespace fault

}  // namespace clarinet::ad
