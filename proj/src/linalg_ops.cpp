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

#include <Eigen/Dense>
#include <cmath>

#include "copsel/autodiff.hpp"
#include "copsel/errors.hpp"

namespace copsel {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Number of [d, d] blocks in a [..., d, d] tensor.
std::size_t square_blocks(const Tensor& t, const char* op, std::size_t& d) {
  const std::size_t r = t.rank();
  if (r < 2 || t.dim(r - 1) != t.dim(r - 2)) {
    throw ShapeError(std::string(op) + ": expected [..., d, d], got " +
                     shape_string(t.shape()));
  }
  d = t.dim(r - 1);
  return d ? t.size() / (d * d) : 0;
}

void factor_block(const double* a, double* l, Eigen::Index d) {
  const RowMat s = 0.5 * (ConstMapMat(a, d, d) + ConstMapMat(a, d, d).transpose());
  MapMat lm(l, d, d);
  lm.setZero();
  for (Eigen::Index j = 0; j < d; ++j) {
    const double pivot = s(j, j) - lm.row(j).head(j).squaredNorm();
    if (!(pivot > 0.0)) {
      throw FactorizationError(static_cast<std::size_t>(j), pivot);
    }
    const double ljj = std::sqrt(pivot);
    lm(j, j) = ljj;
    const Eigen::Index rest = d - j - 1;
    if (rest > 0) {
      lm.col(j).tail(rest) =
          (s.col(j).tail(rest) -
           lm.block(j + 1, 0, rest, j) * lm.row(j).head(j).transpose()) /
          ljj;
    }
  }
}

}  // namespace

Var cholesky(Var a) {
  const Tensor& av = a.value();
  std::size_t d = 0;
  const std::size_t blocks = square_blocks(av, "cholesky", d);
  const auto n = static_cast<Eigen::Index>(d);
  Tensor out(av.shape());
  for (std::size_t k = 0; k < blocks; ++k) {
    factor_block(av.data().data() + k * d * d, out.data().data() + k * d * d, n);
  }
  // With S = (A + A^T)/2 and L = chol(S):
  //   X = L^{-T} Phi(L^T G) L^{-1},  Phi = lower triangle with halved diagonal
  //   dA = (X + X^T) / 2
  return a.tape()->record(
      "cholesky", std::move(out), {a}, [blocks, d, n](const BackwardArgs& g) {
        Eigen::MatrixXd lmat(n, n), p(n, n);
        for (std::size_t k = 0; k < blocks; ++k) {
          const std::size_t off = k * d * d;
          lmat = ConstMapMat(g.output.data().data() + off, n, n);
          const Eigen::MatrixXd gl =
              ConstMapMat(g.output_grad.data().data() + off, n, n)
                  .triangularView<Eigen::Lower>();
          p.noalias() = lmat.transpose() * gl;
          p.triangularView<Eigen::StrictlyUpper>().setZero();
          p.diagonal() *= 0.5;
          lmat.transpose().triangularView<Eigen::Upper>().solveInPlace(p);
          lmat.triangularView<Eigen::Lower>()
              .solveInPlace<Eigen::OnTheRight>(p);
          MapMat(g.input_grads[0]->data().data() + off, n, n) +=
              0.5 * (p + p.transpose());
        }
      });
}

Var add_diagonal(Var a, Var s) {
  const Tensor& av = a.value();
  std::size_t d = 0;
  const std::size_t blocks = square_blocks(av, "add_diagonal", d);
  const Tensor& sv = s.value();
  if (sv.size() != 1 && sv.size() != blocks) {
    throw ShapeError("add_diagonal: need 1 or " + std::to_string(blocks) +
                     " shifts, got " + std::to_string(sv.size()));
  }
  const bool shared = sv.size() == 1;
  Tensor out = av;
  for (std::size_t k = 0; k < blocks; ++k) {
    const double shift = sv[shared ? 0 : k];
    for (std::size_t i = 0; i < d; ++i) out[k * d * d + i * d + i] += shift;
  }
  if (a.tape() != s.tape()) {
    throw std::invalid_argument("add_diagonal: operands must share one tape");
  }
  return a.tape()->record(
      "add_diagonal", std::move(out), {a, s},
      [blocks, d, shared](const BackwardArgs& g) {
        if (g.input_grads[0]) {
          Tensor& ga = *g.input_grads[0];
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g.output_grad[i];
        }
        if (g.input_grads[1]) {
          Tensor& gs = *g.input_grads[1];
          for (std::size_t k = 0; k < blocks; ++k) {
            double tr = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
              tr += g.output_grad[k * d * d + i * d + i];
            }
            gs[shared ? 0 : k] += tr;
          }
        }
      });
}

Var correlation(Var sigma) {
  const Tensor& sv = sigma.value();
  std::size_t d = 0;
  const std::size_t blocks = square_blocks(sv, "correlation", d);
  Tensor out(sv.shape());
  Tensor inv_sd(Shape{blocks, d});
  for (std::size_t k = 0; k < blocks; ++k) {
    const double* s = sv.data().data() + k * d * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double v = s[i * d + i];
      if (!(v > 0.0)) {
        throw DomainError("correlation: non-positive diagonal entry " +
                          std::to_string(v) + " at index " + std::to_string(i));
      }
      inv_sd[k * d + i] = 1.0 / std::sqrt(v);
    }
    double* c = out.data().data() + k * d * d;
    const double* r = inv_sd.data().data() + k * d;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) c[i * d + j] = s[i * d + j] * r[i] * r[j];
    }
  }
  return sigma.tape()->record(
      "correlation", std::move(out), {sigma},
      [inv_sd = std::move(inv_sd), blocks, d](const BackwardArgs& g) {
        for (std::size_t k = 0; k < blocks; ++k) {
          const std::size_t off = k * d * d;
          const double* gc = g.output_grad.data().data() + off;
          const double* c = g.output.data().data() + off;
          const double* r = inv_sd.data().data() + k * d;
          double* gs = g.input_grads[0]->data().data() + off;
          for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) gs[i * d + j] += gc[i * d + j] * r[i] * r[j];
          }
          for (std::size_t m = 0; m < d; ++m) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              acc += gc[m * d + j] * c[m * d + j] + gc[j * d + m] * c[j * d + m];
            }
            gs[m * d + m] -= 0.5 * r[m] * r[m] * acc;
          }
        }
      });
}

}  // namespace copsel
