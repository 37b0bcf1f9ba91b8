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
#include <algorithm>
#include <cmath>
#include <numbers>

#include "copsel/autodiff.hpp"
#include "copsel/errors.hpp"

namespace copsel {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(op) +
                                ": operands must share one tape");
  }
  return *a.tape();
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Output shape of a broadcasting binary op; see autodiff.hpp for the rules.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  if (shape_size(b) == 1 && b.size() <= a.size()) return a;
  if (shape_size(a) == 1 && a.size() <= b.size()) return b;
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  throw ShapeError(std::string(op) + ": cannot broadcast " +
                   shape_string(a) + " with " + shape_string(b));
}

template <class Fwd, class Bwd>
Var binary(const char* op, Var a, Var b, Fwd fwd, Bwd bwd) {
  Tape& tape = same_tape(a, b, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(broadcast_shape(av.shape(), bv.shape(), op));
  // Both operands tile the output (suffix broadcasting), so wrapping
  // counters replace per-element modulo.
  const std::size_t na = av.size(), nb = bv.size();
  const double* pa = av.data().data();
  const double* pb = bv.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0, ia = 0, ib = 0; i < out.size(); ++i) {
    po[i] = fwd(pa[ia], pb[ib]);
    if (++ia == na) ia = 0;
    if (++ib == nb) ib = 0;
  }
  return tape.record(op, std::move(out), {a, b}, [bwd](const BackwardArgs& g) {
    const double* x = g.inputs[0]->data().data();
    const double* y = g.inputs[1]->data().data();
    const std::size_t nx = g.inputs[0]->size(), ny = g.inputs[1]->size();
    double* gx = g.input_grads[0] ? g.input_grads[0]->data().data() : nullptr;
    double* gy = g.input_grads[1] ? g.input_grads[1]->data().data() : nullptr;
    const double* out = g.output.data().data();
    const double* gout = g.output_grad.data().data();
    for (std::size_t i = 0, ix = 0, iy = 0; i < g.output.size(); ++i) {
      double dx = 0.0, dy = 0.0;
      bwd(x[ix], y[iy], out[i], gout[i], dx, dy);
      if (gx) gx[ix] += dx;
      if (gy) gy[iy] += dy;
      if (++ix == nx) ix = 0;
      if (++iy == ny) iy = 0;
    }
  });
}

// Fwd: x -> y. Bwd: (x, y) -> dy/dx.
template <class Fwd, class Deriv>
Var unary(const char* op, Var a, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return a.tape()->record(
      op, std::move(out), {a}, [deriv](const BackwardArgs& g) {
        const Tensor& x = *g.inputs[0];
        Tensor& gx = *g.input_grads[0];
        for (std::size_t i = 0; i < x.size(); ++i) {
          gx[i] += g.output_grad[i] * deriv(x[i], g.output[i]);
        }
      });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t last_dim(const Tensor& t, const char* op) {
  if (t.rank() == 0) throw ShapeError(std::string(op) + ": needs rank >= 1");
  return t.shape().back();
}

}  // namespace

double standard_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double standard_normal_pdf(double x) {
  constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// --- matrix products --------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: shapes " + shape_string(av.shape()) + " and " +
                     shape_string(bv.shape()) + " do not chain");
  }
  const auto m = static_cast<Eigen::Index>(av.dim(0));
  const auto n = static_cast<Eigen::Index>(av.dim(1));
  const auto p = static_cast<Eigen::Index>(bv.dim(1));
  Tensor out(Shape{av.dim(0), bv.dim(1)});
  MapMat(out.data().data(), m, p).noalias() =
      ConstMapMat(av.data().data(), m, n) * ConstMapMat(bv.data().data(), n, p);
  return tape.record("matmul", std::move(out), {a, b},
                     [m, n, p](const BackwardArgs& g) {
                       ConstMapMat go(g.output_grad.data().data(), m, p);
                       if (g.input_grads[0]) {
                         ConstMapMat bm(g.inputs[1]->data().data(), n, p);
                         MapMat(g.input_grads[0]->data().data(), m, n)
                             .noalias() += go * bm.transpose();
                       }
                       if (g.input_grads[1]) {
                         ConstMapMat am(g.inputs[0]->data().data(), m, n);
                         MapMat(g.input_grads[1]->data().data(), n, p)
                             .noalias() += am.transpose() * go;
                       }
                     });
}

Var bmm(Var a, Var b, bool transpose_b) {
  Tape& tape = same_tape(a, b, "bmm");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() < 2 || bv.rank() != av.rank() ||
      !std::equal(av.shape().begin(), av.shape().end() - 2,
                  bv.shape().begin())) {
    throw ShapeError("bmm: incompatible batch shapes " +
                     shape_string(av.shape()) + " and " +
                     shape_string(bv.shape()));
  }
  const std::size_t r = av.rank();
  const auto m = static_cast<Eigen::Index>(av.dim(r - 2));
  const auto n = static_cast<Eigen::Index>(av.dim(r - 1));
  const auto bn = static_cast<Eigen::Index>(bv.dim(transpose_b ? r - 1 : r - 2));
  const auto p = static_cast<Eigen::Index>(bv.dim(transpose_b ? r - 2 : r - 1));
  if (bn != n) {
    throw ShapeError("bmm: inner dimensions differ: " +
                     shape_string(av.shape()) + " and " +
                     shape_string(bv.shape()));
  }
  const std::size_t batch = av.size() / static_cast<std::size_t>(m * n);
  Shape out_shape(av.shape().begin(), av.shape().end() - 2);
  out_shape.push_back(static_cast<std::size_t>(m));
  out_shape.push_back(static_cast<std::size_t>(p));
  Tensor out(out_shape);
  const std::size_t sa = m * n, sb = n * p, so = m * p;
  for (std::size_t k = 0; k < batch; ++k) {
    ConstMapMat am(av.data().data() + k * sa, m, n);
    MapMat om(out.data().data() + k * so, m, p);
    if (transpose_b) {
      om.noalias() = am * ConstMapMat(bv.data().data() + k * sb, p, n).transpose();
    } else {
      om.noalias() = am * ConstMapMat(bv.data().data() + k * sb, n, p);
    }
  }
  return tape.record(
      "bmm", std::move(out), {a, b},
      [=](const BackwardArgs& g) {
        const double* A = g.inputs[0]->data().data();
        const double* B = g.inputs[1]->data().data();
        const double* G = g.output_grad.data().data();
        for (std::size_t k = 0; k < batch; ++k) {
          ConstMapMat gm(G + k * so, m, p);
          ConstMapMat am(A + k * sa, m, n);
          if (g.input_grads[0]) {
            MapMat ga(g.input_grads[0]->data().data() + k * sa, m, n);
            if (transpose_b) {
              ga.noalias() += gm * ConstMapMat(B + k * sb, p, n);
            } else {
              ga.noalias() += gm * ConstMapMat(B + k * sb, n, p).transpose();
            }
          }
          if (g.input_grads[1]) {
            if (transpose_b) {
              MapMat(g.input_grads[1]->data().data() + k * sb, p, n)
                  .noalias() += gm.transpose() * am;
            } else {
              MapMat(g.input_grads[1]->data().data() + k * sb, n, p)
                  .noalias() += am.transpose() * gm;
            }
          }
        }
      });
}

// --- elementwise binary -----------------------------------------------------

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double, double g, double& dx, double& dy) {
        dx = g;
        dy = g;
      });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double, double g, double& dx, double& dy) {
        dx = g;
        dy = -g;
      });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double, double g, double& dx, double& dy) {
        dx = g * y;
        dy = g * x;
      });
}

Var div(Var a, Var b) {
  for (double v : b.value().data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double out, double g, double& dx, double& dy) {
        dx = g / y;
        dy = -g * out / y;
      });
}

Var scale(Var a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(
      "add_scalar", a, [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

// --- elementwise unary ------------------------------------------------------

Var sigmoid(Var a) {
  return unary("sigmoid", a, stable_sigmoid,
               [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var selu(Var a) {
  return unary(
      "selu", a,
      [](double x) {
        return x > 0.0 ? kSeluScale * x
                       : kSeluScale * kSeluAlpha * std::expm1(x);
      },
      [](double x, double) {
        return x > 0.0 ? kSeluScale : kSeluScale * kSeluAlpha * std::exp(x);
      });
}

Var softplus(Var a) {
  return unary(
      "softplus", a,
      [](double x) {
        return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
      },
      [](double x, double) { return stable_sigmoid(x); });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(v));
    }
  }
  return unary(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var log1m(Var a) {
  for (double v : a.value().data()) {
    if (!(v < 1.0)) {
      throw DomainError("log1m: input " + std::to_string(v) + " >= 1");
    }
  }
  return unary(
      "log1m", a, [](double x) { return std::log1p(-x); },
      [](double x, double) { return -1.0 / (1.0 - x); });
}

Var abs(Var a) {
  return unary(
      "abs", a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var round(Var a) {
  return unary(
      "round", a, [](double x) { return std::nearbyint(x); },
      [](double, double) { return 0.0; });
}

Var clamp(Var a, double lo, double hi) {
  if (lo > hi) throw DomainError("clamp: lo > hi");
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var normal_cdf(Var x) {
  return unary("normal_cdf", x, standard_normal_cdf,
               [](double v, double) { return standard_normal_pdf(v); });
}

// --- softmax ----------------------------------------------------------------

Var softmax(Var v, double temperature) {
  if (!(temperature > 0.0)) {
    throw DomainError("softmax: temperature must be positive, got " +
                      std::to_string(temperature));
  }
  const Tensor& in = v.value();
  const std::size_t n = last_dim(in, "softmax");
  const std::size_t rows = n ? in.size() / n : 0;
  Tensor out(in.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.data().data() + r * n;
    double* y = out.data().data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = std::exp((x[i] - mx) / temperature);
      total += y[i];
    }
    for (std::size_t i = 0; i < n; ++i) y[i] /= total;
  }
  return v.tape()->record(
      "softmax", std::move(out), {v},
      [n, rows, temperature](const BackwardArgs& g) {
        Tensor& gx = *g.input_grads[0];
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = g.output.data().data() + r * n;
          const double* gy = g.output_grad.data().data() + r * n;
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i) dot += gy[i] * y[i];
          for (std::size_t i = 0; i < n; ++i) {
            gx[r * n + i] += y[i] * (gy[i] - dot) / temperature;
          }
        }
      });
}

// --- reductions and reshapes -------------------------------------------------

Var sum(Var a) {
  double total = 0.0;
  for (double x : a.value().data()) total += x;
  return a.tape()->record("sum", Tensor::scalar(total), {a},
                          [](const BackwardArgs& g) {
                            const double go = g.output_grad[0];
                            for (double& x : g.input_grads[0]->data()) x += go;
                          });
}

Var mean(Var a) {
  const std::size_t n = a.size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_last(Var a) {
  const Tensor& in = a.value();
  const std::size_t n = last_dim(in, "sum_last");
  Shape out_shape(in.shape().begin(), in.shape().end() - 1);
  Tensor out(out_shape);
  for (std::size_t r = 0; r < out.size(); ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += in[r * n + i];
    out[r] = s;
  }
  return a.tape()->record("sum_last", std::move(out), {a},
                          [n](const BackwardArgs& g) {
                            Tensor& gx = *g.input_grads[0];
                            for (std::size_t r = 0; r < g.output.size(); ++r) {
                              for (std::size_t i = 0; i < n; ++i) {
                                gx[r * n + i] += g.output_grad[r];
                              }
                            }
                          });
}

Var mean_last(Var a) {
  const std::size_t n = last_dim(a.value(), "mean_last");
  if (n == 0) throw ShapeError("mean_last: empty last axis");
  return scale(sum_last(a), 1.0 / static_cast<double>(n));
}

Var reshape(Var a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_string(a.shape()) + " -> " +
                     shape_string(shape));
  }
  return a.tape()->record("reshape", a.value().reshaped(std::move(shape)), {a},
                          [](const BackwardArgs& g) {
                            Tensor& gx = *g.input_grads[0];
                            for (std::size_t i = 0; i < gx.size(); ++i) {
                              gx[i] += g.output_grad[i];
                            }
                          });
}

// --- batch norm ---------------------------------------------------------------

Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state,
               bool training) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) {
    throw ShapeError("batch_norm: expected [batch, h], got " +
                     shape_string(xv.shape()));
  }
  const std::size_t batch = xv.dim(0), h = xv.dim(1);
  if (gamma.size() != h || beta.size() != h) {
    throw ShapeError("batch_norm: scale/shift must have " + std::to_string(h) +
                     " entries");
  }
  if (training && batch < 2) {
    throw DomainError("batch_norm: training mode needs batch >= 2");
  }
  if (state.running_mean.size() != h) {
    state.running_mean.assign(h, 0.0);
    state.running_var.assign(h, 1.0);
  }

  std::vector<double> mu(h), var(h);
  if (training) {
    for (std::size_t j = 0; j < h; ++j) {
      double m = 0.0;
      for (std::size_t b = 0; b < batch; ++b) m += xv.at(b, j);
      m /= static_cast<double>(batch);
      double v = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double d = xv.at(b, j) - m;
        v += d * d;
      }
      v /= static_cast<double>(batch);
      mu[j] = m;
      var[j] = v;
      const double unbiased = v * static_cast<double>(batch) /
                              static_cast<double>(batch - 1);
      state.running_mean[j] =
          (1.0 - state.momentum) * state.running_mean[j] + state.momentum * m;
      state.running_var[j] = (1.0 - state.momentum) * state.running_var[j] +
                             state.momentum * unbiased;
    }
  } else {
    mu = state.running_mean;
    var = state.running_var;
  }

  const double eps = state.epsilon;
  std::vector<double> inv_std(h);
  std::vector<bool> floored(h);
  for (std::size_t j = 0; j < h; ++j) {
    floored[j] = var[j] < eps;
    inv_std[j] = 1.0 / std::sqrt(std::max(var[j], eps));
  }

  Tensor xhat(xv.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < h; ++j) {
      xhat.at(b, j) = (xv.at(b, j) - mu[j]) * inv_std[j];
    }
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < h; ++j) {
      out.at(b, j) = gv[j] * xhat.at(b, j) + bv[j];
    }
  }

  Tape& tape = same_tape(x, gamma, "batch_norm");
  same_tape(x, beta, "batch_norm");
  return tape.record(
      "batch_norm", std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std),
       floored = std::move(floored), batch, h,
       training](const BackwardArgs& g) {
        const Tensor& gam = *g.inputs[1];
        const Tensor& go = g.output_grad;
        if (g.input_grads[1] || g.input_grads[2]) {
          for (std::size_t j = 0; j < h; ++j) {
            double sg = 0.0, sb = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
              sg += go.at(b, j) * xhat.at(b, j);
              sb += go.at(b, j);
            }
            if (g.input_grads[1]) (*g.input_grads[1])[j] += sg;
            if (g.input_grads[2]) (*g.input_grads[2])[j] += sb;
          }
        }
        if (!g.input_grads[0]) return;
        Tensor& gx = *g.input_grads[0];
        const double nb = static_cast<double>(batch);
        for (std::size_t j = 0; j < h; ++j) {
          if (!training) {
            for (std::size_t b = 0; b < batch; ++b) {
              gx.at(b, j) += go.at(b, j) * gam[j] * inv_std[j];
            }
            continue;
          }
          double mean_g = 0.0, mean_gx = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            const double gh = go.at(b, j) * gam[j];
            mean_g += gh;
            mean_gx += gh * xhat.at(b, j);
          }
          mean_g /= nb;
          mean_gx /= nb;
          // A floored variance is a constant denominator.
          if (floored[j]) mean_gx = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            const double gh = go.at(b, j) * gam[j];
            gx.at(b, j) += inv_std[j] * (gh - mean_g - xhat.at(b, j) * mean_gx);
          }
        }
      });
}

// --- loss ---------------------------------------------------------------------

Var cross_entropy(Var probs, std::span<const int> labels) {
  const Tensor& p = probs.value();
  if (p.rank() != 2 || p.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy: probabilities " + shape_string(p.shape()) +
                     " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = p.dim(0), classes = p.dim(1);
  constexpr double kFloor = 1e-300;
  double total = 0.0;
  std::vector<std::size_t> idx(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes) {
      throw DomainError("cross_entropy: label " + std::to_string(labels[b]) +
                        " outside [0, " + std::to_string(classes) + ")");
    }
    idx[b] = b * classes + static_cast<std::size_t>(labels[b]);
    total -= std::log(std::max(p[idx[b]], kFloor));
  }
  total /= static_cast<double>(batch);
  return probs.tape()->record(
      "cross_entropy", Tensor::scalar(total), {probs},
      [idx = std::move(idx), batch](const BackwardArgs& g) {
        const Tensor& pv = *g.inputs[0];
        Tensor& gp = *g.input_grads[0];
        const double scale = g.output_grad[0] / static_cast<double>(batch);
        for (std::size_t i : idx) {
          if (pv[i] > kFloor) gp[i] -= scale / pv[i];
        }
      });
}

}  // namespace copsel
