/* Copyright 2026 The Copsel Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Reverse-mode differentiation over Tensor values.
//
// A Tape records every operation applied to its variables in execution order.
// Tape::backward() walks that record in reverse, calling each node's backward
// function once and accumulating input gradients additively. Variables are
// lightweight handles (tape pointer + node index) and are only valid while
// their tape is alive.

#ifndef COPSEL_AUTODIFF_HPP_
#define COPSEL_AUTODIFF_HPP_

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "copsel/tensor.hpp"

namespace copsel {

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Arguments handed to a node's backward function. `input_grads[i]` is null
// when input i does not require a gradient; otherwise it is a zero-initialized
// (or partially accumulated) tensor of the input's shape to add into.
struct BackwardArgs {
  const Tensor& output;
  const Tensor& output_grad;
  std::span<const Tensor* const> inputs;
  std::span<Tensor* const> input_grads;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf without gradient.
  Var constant(Tensor value);
  // Leaf that receives a gradient on backward().
  Var variable(Tensor value);

  // Appends an operation node. The output requires a gradient iff any input
  // does; otherwise `backward` is dropped. Throws NonFiniteError if `value`
  // holds NaN or Inf.
  Var record(const char* op, Tensor value, std::vector<Var> inputs,
             BackwardFn backward);

  // Reverse sweep from a scalar root. Gradients from an earlier sweep are
  // cleared first.
  void backward(Var root);

  // Gradient of `v` from the last backward(); zeros if unreachable.
  Tensor grad(Var v) const;

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_[id].op; }

  // Node ids in the order backward() last visited them.
  const std::vector<std::size_t>& last_backward_order() const {
    return visit_order_;
  }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::vector<std::size_t> visit_order_;
};

// ---------------------------------------------------------------------------
// Operations. All operands must live on the same tape.
//
// Binary elementwise ops broadcast when one operand is a scalar (size 1) or
// its shape is a trailing suffix of the other's shape (e.g. a bias row [n]
// against a batch [m, n]).
// ---------------------------------------------------------------------------

Var matmul(Var a, Var b);
// Batched product over leading dims: [..., m, n] x [..., n, p]. With
// `transpose_b`, b is [..., p, n] and its last two axes are swapped.
Var bmm(Var a, Var b, bool transpose_b = false);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var neg(Var a);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var selu(Var a);
Var softplus(Var a);
Var exp(Var a);
// Requires every entry > 0.
Var log(Var a);
// log(1 - a); requires every entry < 1.
Var log1m(Var a);
Var abs(Var a);
// Round half to even; forward only, gradient is zero.
Var round(Var a);
// Clamp into [lo, hi]; gradient passes only where unclamped.
Var clamp(Var a, double lo, double hi);

// Softmax over the last axis of v / temperature, with max subtraction.
Var softmax(Var v, double temperature);
// Standard normal CDF; derivative is the standard normal density.
Var normal_cdf(Var x);

// Lower Cholesky factor of [..., d, d]. The input is symmetrized as
// (A + A^T) / 2 before factorization. Throws FactorizationError on a
// non-positive pivot.
Var cholesky(Var a);
// Adds s * I to each [d, d] block; `s` is a scalar or has one entry per
// leading batch index.
Var add_diagonal(Var a, Var s);
// Covariance to correlation: C_ij = S_ij / sqrt(S_ii S_jj) per [d, d] block.
// Throws DomainError on a non-positive diagonal entry.
Var correlation(Var sigma);

Var sum(Var a);
Var mean(Var a);
// Reductions over the last axis; the axis is dropped.
Var sum_last(Var a);
Var mean_last(Var a);
Var reshape(Var a, Shape shape);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  // Variance floor: normalization divides by sqrt(max(var, epsilon)).
  double epsilon = 1e-5;
};

// Per-column standardization of x [batch, h] followed by gamma * . + beta.
// Training mode uses batch statistics (requires batch >= 2) and updates
// `state`; inference mode uses the running statistics.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state,
               bool training);

// Mean negative log-likelihood of integer labels under row-probabilities
// probs [batch, classes]. Probabilities are floored at 1e-300 inside the log.
Var cross_entropy(Var probs, std::span<const int> labels);

// Scalar helpers shared by ops and tests.
double standard_normal_cdf(double x);
double standard_normal_pdf(double x);

inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr double kSeluScale = 1.0507009873554804934193349852946;

}  // namespace copsel

#endif  // COPSEL_AUTODIFF_HPP_
