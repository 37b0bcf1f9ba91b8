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

// Gaussian-copula noise with a factor-model correlation.
//
// The covariance is built from a loading matrix L (d x p) as either
//   Sigma = L L^T + sigma^2 I        (binary-mask sampling)
//   Sigma = I + tau L L^T            (top-k sampling)
// and rescaled to a correlation R = Norm(Sigma). Correlated uniforms are
// u_i = Phi(q_i) with q = chol(R + jitter I) zeta and zeta ~ N(0, I). Every
// step is recorded on the tape, so u is differentiable in L and sigma.
//
// A model is either shared ("unbatched": L is [d, p], sigma a scalar) or
// per-sample ("batched": L is [B, d, p], sigma is [B]).

#ifndef COPSEL_COPULA_HPP_
#define COPSEL_COPULA_HPP_

#include <cstddef>
#include <filesystem>

#include "copsel/autodiff.hpp"
#include "copsel/random.hpp"

namespace copsel {

enum class CovarianceForm {
  kFactorPlusNoise,  // L L^T + sigma^2 I
  kScaledFactor,     // I + tau L L^T
};

enum class RankMode { kLow, kFull };

inline constexpr double kCopulaJitter = 1e-8;
inline constexpr double kUniformClamp = 1e-12;

struct CorrelationModel {
  Var factor;  // [d, p] or [B, d, p]
  Var sigma;   // noise level; scalar or [B]. Unused by kScaledFactor.
  double tau = 0.0;
  CovarianceForm form = CovarianceForm::kFactorPlusNoise;

  bool batched() const { return factor.value().rank() == 3; }
  std::size_t dim() const;
};

struct NoiseDraw {
  Tensor zeta;  // standard normal, [n, d]
  Var q;        // correlated Gaussian, [n, d]
  Var u;        // correlated uniform in [kUniformClamp, 1 - kUniformClamp]
};

Var build_covariance(const CorrelationModel& model);
// Norm(Sigma): unit diagonal correlation matrix.
Var normalize(Var sigma);

// Batched models draw one vector per sample; unbatched models draw `draws`
// vectors from the shared correlation.
NoiseDraw sample_correlated_uniform(const CorrelationModel& model, Rng& rng,
                                    std::size_t draws = 1);
// Same map with a caller-fixed zeta ([B, d] or [draws, d]).
NoiseDraw correlated_uniform_from(const CorrelationModel& model, Tensor zeta);
// Factor-structured draw with the same law as correlated_uniform_from, without
// factorizing R: with zeta = (eta, eps), eta in R^d and eps in R^p,
//   q = D^{-1/2} (L eps + sigma eta)        (L L^T + sigma^2 I)
//   q = D^{-1/2} (eta + sqrt(tau) L eps)    (I + tau L L^T)
// where D is the diagonal of Sigma. Costs O(d p) per row instead of O(d^3).
// zeta is [B, d + p] (batched) or [draws, d + p].
NoiseDraw factor_uniform_from(const CorrelationModel& model, Tensor zeta);
NoiseDraw sample_factor_uniform(const CorrelationModel& model, Rng& rng,
                                std::size_t draws = 1);
std::size_t factor_rank(const CorrelationModel& model);

// Correlated uniforms from an explicit correlation matrix [d, d] or [B, d, d].
NoiseDraw uniform_from_correlation(Var correlation, Tensor zeta);

// Independent noise (R = I); the copula-free ablation.
NoiseDraw independent_uniform(Tape& tape, std::size_t rows, std::size_t d,
                              Rng& rng);

// CSV: header row "1,...,d" then d rows of shortest round-trip values.
void export_matrix_csv(const Tensor& matrix, const std::filesystem::path& path);

}  // namespace copsel

#endif  // COPSEL_COPULA_HPP_
