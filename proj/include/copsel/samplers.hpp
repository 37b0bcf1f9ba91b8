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

// Differentiable feature-mask samplers driven by (correlated) uniform noise.
//
// Binary mode relaxes independent Bernoulli inclusion with logistic noise:
//   soft_i = sigmoid((logit(u_i) + alpha_i) / t),  hard_i = round(soft_i).
//
// Top-k mode relaxes weighted sampling without replacement. Keys are
// v_i = log(u_i) / alpha_i; k successive softmaxes are taken, each step
// pushing down the keys that already received mass:
//   p^1 = softmax(v / t)
//   v^s = v^{s-1} + t^delta * log(1 - p^{s-1}),  p^s = softmax(v^s / t)
//   soft = sum_s p^s,  hard = top-k indices of soft.

#ifndef COPSEL_SAMPLERS_HPP_
#define COPSEL_SAMPLERS_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "copsel/autodiff.hpp"
#include "copsel/random.hpp"

namespace copsel {

enum class SelectionMode { kBinary, kTopK };

// With delta near 0 the push-down step outweighs key gaps smaller than t and
// reorders near-tied keys; close to 1, the clamped log(1 - p) caps the step
// below large key gaps and the winner is picked twice. 0.8 keeps the hard
// mask on key order for t in [0.005, 1].
inline constexpr double kDefaultTopkDelta = 0.8;

struct SamplerParams {
  double temperature = 1.0;  // t > 0
  double delta = kDefaultTopkDelta;  // step exponent in [0, 1)
  std::size_t k = 1;         // top-k count, 1 <= k <= d
  double lambda = 0.0;       // L1 weight on the binary soft mask

  // Throws DomainError if a field is out of range for d features.
  void validate(std::size_t d, SelectionMode mode) const;
};

struct RelaxedMask {
  Var soft;     // [B, d], differentiable
  Tensor hard;  // [B, d] of 0/1
  SelectionMode mode = SelectionMode::kBinary;
};

// Per-step iterates of the top-k relaxation, for inspection in tests.
struct TopkTrace {
  std::vector<Tensor> keys;   // v^s, s = 1..k
  std::vector<Tensor> probs;  // p^s, s = 1..k
};

inline constexpr double kTopkProbCeiling = 1.0 - 1e-12;

RelaxedMask binary_mask(Var alpha, Var u, const SamplerParams& params);

// P(z_i = 1) = logistic(alpha_i).
double marginal_inclusion_probability(double alpha);

// alpha must be strictly positive.
RelaxedMask topk_relaxed(Var alpha, Var u, const SamplerParams& params,
                         TopkTrace* trace = nullptr);

// Row-wise k-hot mask of the k largest entries. Ties go to the larger
// `tiebreak` entry (same shape as soft, optional), then to the lower index.
Tensor trunc(const Tensor& soft, std::size_t k, const Tensor* tiebreak = nullptr);
std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t k,
                                     std::span<const double> tiebreak = {});

// Exact law of ordered k-draws under weighted sampling without replacement.
struct WrsDistribution {
  std::size_t d = 0;
  std::size_t k = 0;
  std::map<std::vector<std::size_t>, double> ordered;

  // Marginalized to unordered subsets, keyed by bitmask over features.
  std::map<std::uint32_t, double> subsets() const;
  double total() const;
};

inline constexpr std::size_t kMaxEnumerationDim = 8;

WrsDistribution exact_wrs_distribution(std::span<const double> alpha,
                                       std::size_t k);

// Classical WRS: keys u_i^{1/alpha_i} with independent uniforms, take the k
// largest. Returned in decreasing key order.
std::vector<std::size_t> wrs_reference_sampler(std::span<const double> alpha,
                                               std::size_t k, Rng& rng);

std::uint32_t subset_mask(std::span<const std::size_t> indices);

}  // namespace copsel

#endif  // COPSEL_SAMPLERS_HPP_
