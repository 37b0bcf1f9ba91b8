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

#include "copsel/copula.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "copsel/errors.hpp"
#include "format.hpp"

namespace copsel {

std::size_t CorrelationModel::dim() const {
  const Tensor& l = factor.value();
  return l.dim(l.rank() - 2);
}

Var build_covariance(const CorrelationModel& model) {
  const Tensor& l = model.factor.value();
  if (l.rank() != 2 && l.rank() != 3) {
    throw ShapeError("build_covariance: factor must be [d, p] or [B, d, p], got " +
                     shape_string(l.shape()));
  }
  Tape& tape = *model.factor.tape();
  Var outer = bmm(model.factor, model.factor, /*transpose_b=*/true);
  if (model.form == CovarianceForm::kScaledFactor) {
    if (!(model.tau >= 0.0)) throw DomainError("build_covariance: tau < 0");
    return add_diagonal(scale(outer, model.tau),
                        tape.constant(Tensor::scalar(1.0)));
  }
  return add_diagonal(outer, mul(model.sigma, model.sigma));
}

Var normalize(Var sigma) { return correlation(sigma); }

NoiseDraw uniform_from_correlation(Var corr, Tensor zeta) {
  Tape& tape = *corr.tape();
  const Tensor& r = corr.value();
  const std::size_t d = r.dim(r.rank() - 1);
  if (zeta.rank() != 2 || zeta.dim(1) != d) {
    throw ShapeError("copula: zeta must be [n, " + std::to_string(d) +
                     "], got " + shape_string(zeta.shape()));
  }
  Var v = cholesky(add_diagonal(corr, tape.constant(Tensor::scalar(kCopulaJitter))));
  Var q;
  if (r.rank() == 3) {
    const std::size_t batch = r.dim(0);
    if (zeta.dim(0) != batch) {
      throw ShapeError("copula: batched model needs one zeta row per sample");
    }
    Var z = tape.constant(zeta.reshaped({batch, d, 1}));
    q = reshape(bmm(v, z), {batch, d});
  } else {
    q = bmm(tape.constant(zeta), v, /*transpose_b=*/true);
  }
  Var u = clamp(normal_cdf(q), kUniformClamp, 1.0 - kUniformClamp);
  return NoiseDraw{std::move(zeta), q, u};
}

NoiseDraw correlated_uniform_from(const CorrelationModel& model, Tensor zeta) {
  return uniform_from_correlation(normalize(build_covariance(model)),
                                  std::move(zeta));
}

NoiseDraw sample_correlated_uniform(const CorrelationModel& model, Rng& rng,
                                    std::size_t draws) {
  const std::size_t d = model.dim();
  const std::size_t rows = model.batched() ? model.factor.value().dim(0) : draws;
  return correlated_uniform_from(model, rng.normal_tensor({rows, d}));
}

std::size_t factor_rank(const CorrelationModel& model) {
  const Tensor& l = model.factor.value();
  return l.dim(l.rank() - 1);
}

NoiseDraw factor_uniform_from(const CorrelationModel& model, Tensor zeta) {
  Tape& tape = *model.factor.tape();
  const Tensor& l = model.factor.value();
  const std::size_t d = model.dim(), p = factor_rank(model);
  const bool batched = model.batched();
  const std::size_t rows = zeta.rank() == 2 ? zeta.dim(0) : 0;
  if (zeta.rank() != 2 || zeta.dim(1) != d + p ||
      (batched && rows != l.dim(0))) {
    throw ShapeError("factor_uniform_from: zeta must be [" +
                     (batched ? std::to_string(l.dim(0)) : std::string("n")) +
                     ", " + std::to_string(d + p) + "], got " +
                     shape_string(zeta.shape()));
  }
  Tensor eta(Shape{rows, d}), eps(Shape{rows, p});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < d; ++i) eta.at(r, i) = zeta.at(r, i);
    for (std::size_t j = 0; j < p; ++j) eps.at(r, j) = zeta.at(r, d + j);
  }
  Var loaded;  // L eps, [rows, d]
  if (batched) {
    loaded = reshape(bmm(model.factor, tape.constant(eps.reshaped({rows, p, 1}))),
                     {rows, d});
  } else {
    loaded = bmm(tape.constant(std::move(eps)), model.factor, /*transpose_b=*/true);
  }
  Var row_norm = sum_last(mul(model.factor, model.factor));  // [B, d] or [d]
  Var noise = tape.constant(std::move(eta));
  Var numerator, variance;
  if (model.form == CovarianceForm::kScaledFactor) {
    if (!(model.tau >= 0.0)) throw DomainError("factor_uniform_from: tau < 0");
    numerator = add(noise, scale(loaded, std::sqrt(model.tau)));
    variance = add_scalar(scale(row_norm, model.tau), 1.0);
  } else {
    Var sigma = model.sigma;
    if (batched) {
      // [B] -> [B, d] so it lines up with the per-sample rows.
      sigma = matmul(reshape(sigma, {rows, 1}),
                     tape.constant(Tensor(Shape{1, d}, 1.0)));
    }
    numerator = add(loaded, mul(noise, sigma));
    variance = add(row_norm, mul(sigma, sigma));
  }
  Var q = div(numerator, exp(scale(log(variance), 0.5)));
  Var u = clamp(normal_cdf(q), kUniformClamp, 1.0 - kUniformClamp);
  return NoiseDraw{std::move(zeta), q, u};
}

NoiseDraw sample_factor_uniform(const CorrelationModel& model, Rng& rng,
                                std::size_t draws) {
  const std::size_t rows = model.batched() ? model.factor.value().dim(0) : draws;
  return factor_uniform_from(
      model, rng.normal_tensor({rows, model.dim() + factor_rank(model)}));
}

NoiseDraw independent_uniform(Tape& tape, std::size_t rows, std::size_t d,
                              Rng& rng) {
  Tensor zeta = rng.normal_tensor({rows, d});
  Var q = tape.constant(zeta);
  Var u = clamp(normal_cdf(q), kUniformClamp, 1.0 - kUniformClamp);
  return NoiseDraw{std::move(zeta), q, u};
}

void export_matrix_csv(const Tensor& matrix, const std::filesystem::path& path) {
  if (matrix.rank() != 2) {
    throw ShapeError("export_matrix_csv: expected a matrix, got " +
                     shape_string(matrix.shape()));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::size_t rows = matrix.dim(0), cols = matrix.dim(1);
  for (std::size_t j = 0; j < cols; ++j) out << (j ? "," : "") << j + 1;
  out << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      out << (j ? "," : "") << format_double(matrix.at(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace copsel
