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

#include <algorithm>

#include "copsel/autodiff.hpp"
#include "copsel/errors.hpp"

namespace copsel {

const Tensor& Var::value() const { return tape_->value(*this); }

bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::record(const char* op, Tensor value, std::vector<Var> inputs,
                 BackwardFn backward) {
  if (!value.all_finite()) {
    throw NonFiniteError(std::string(op) + ": non-finite value in output");
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.tape() != this) {
      throw std::invalid_argument(std::string(op) +
                                  ": operand belongs to a different tape");
    }
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return nodes_.at(v.id()).value; }

bool Tape::requires_grad(Var v) const {
  return nodes_.at(v.id()).requires_grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this) {
    throw std::invalid_argument("backward: root belongs to a different tape");
  }
  Node& r = nodes_.at(root.id());
  if (r.value.size() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " +
                     shape_string(r.value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  visit_order_.clear();
  if (!r.requires_grad) return;
  r.grad = Tensor(r.value.shape(), 1.0);

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    visit_order_.push_back(id);
    if (!n.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t in : n.inputs) {
      Node& src = nodes_[in];
      in_values.push_back(&src.value);
      if (src.requires_grad) {
        if (src.grad.empty()) src.grad = Tensor(src.value.shape(), 0.0);
        in_grads.push_back(&src.grad);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    n.backward(BackwardArgs{n.value, n.grad, in_values, in_grads});
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

}  // namespace copsel
