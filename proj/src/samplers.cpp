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

#include "copsel/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "copsel/errors.hpp"

namespace copsel {
namespace {

void require_matching(Var alpha, Var u, const char* op) {
  if (alpha.shape() != u.shape() || alpha.value().rank() != 2) {
    throw ShapeError(std::string(op) + ": alpha " + shape_string(alpha.shape()) +
                     " and noise " + shape_string(u.shape()) +
                     " must both be [B, d]");
  }
}

void recurse(std::span<const double> alpha, std::size_t k,
             std::vector<std::size_t>& prefix, std::vector<bool>& used,
             double remaining, double prob, WrsDistribution& out) {
  if (prefix.size() == k) {
    out.ordered[prefix] = prob;
    return;
  }
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (used[i]) continue;
    used[i] = true;
    prefix.push_back(i);
    recurse(alpha, k, prefix, used, remaining - alpha[i],
            prob * alpha[i] / remaining, out);
    prefix.pop_back();
    used[i] = false;
  }
}

}  // namespace

void SamplerParams::validate(std::size_t d, SelectionMode mode) const {
  if (!(temperature > 0.0)) {
    throw DomainError("sampler: temperature must be > 0");
  }
  if (!(delta >= 0.0 && delta < 1.0)) {
    throw DomainError("sampler: delta must lie in [0, 1)");
  }
  if (!(lambda >= 0.0)) throw DomainError("sampler: lambda must be >= 0");
  if (mode == SelectionMode::kTopK && (k < 1 || k > d)) {
    throw DomainError("sampler: k = " + std::to_string(k) +
                      " outside [1, " + std::to_string(d) + "]");
  }
}

RelaxedMask binary_mask(Var alpha, Var u, const SamplerParams& params) {
  require_matching(alpha, u, "binary_mask");
  params.validate(alpha.dim(1), SelectionMode::kBinary);
  Var logits = sub(log(u), log1m(u));
  Var soft = sigmoid(scale(add(logits, alpha), 1.0 / params.temperature));
  Tensor hard = soft.value();
  for (double& v : hard.data()) v = std::nearbyint(v);
  return RelaxedMask{soft, std::move(hard), SelectionMode::kBinary};
}

double marginal_inclusion_probability(double alpha) {
  if (alpha >= 0) return 1.0 / (1.0 + std::exp(-alpha));
  const double e = std::exp(alpha);
  return e / (1.0 + e);
}

RelaxedMask topk_relaxed(Var alpha, Var u, const SamplerParams& params,
                         TopkTrace* trace) {
  require_matching(alpha, u, "topk_relaxed");
  params.validate(alpha.dim(1), SelectionMode::kTopK);
  for (double a : alpha.value().data()) {
    if (!(a > 0.0)) {
      throw DomainError("topk_relaxed: weights must be positive, got " +
                        std::to_string(a));
    }
  }
  const double t = params.temperature;
  const double step = std::pow(t, params.delta);

  Var keys = div(log(u), alpha);
  // Soft values underflow to equal zeros at low temperature; the WRS keys
  // still order them.
  const Tensor wrs_keys = keys.value();
  Var probs = softmax(keys, t);
  Var soft = probs;
  if (trace) {
    trace->keys = {keys.value()};
    trace->probs = {probs.value()};
  }
  for (std::size_t s = 2; s <= params.k; ++s) {
    keys = add(keys, scale(log1m(clamp(probs, 0.0, kTopkProbCeiling)), step));
    probs = softmax(keys, t);
    soft = add(soft, probs);
    if (trace) {
      trace->keys.push_back(keys.value());
      trace->probs.push_back(probs.value());
    }
  }
  return RelaxedMask{soft, trunc(soft.value(), params.k, &wrs_keys),
                     SelectionMode::kTopK};
}

std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t k,
                                     std::span<const double> tiebreak) {
  if (k > values.size()) {
    throw DomainError("trunc: k = " + std::to_string(k) + " exceeds length " +
                      std::to_string(values.size()));
  }
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (!tiebreak.empty() && tiebreak.size() != values.size()) {
    throw ShapeError("top_indices: tiebreak length mismatch");
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return !tiebreak.empty() && tiebreak[a] > tiebreak[b];
  });
  idx.resize(k);
  return idx;
}

Tensor trunc(const Tensor& soft, std::size_t k, const Tensor* tiebreak) {
  if (soft.rank() != 1 && soft.rank() != 2) {
    throw ShapeError("trunc: expected [d] or [B, d], got " +
                     shape_string(soft.shape()));
  }
  const std::size_t d = soft.shape().back();
  const std::size_t rows = d ? soft.size() / d : 0;
  Tensor hard(soft.shape());
  if (tiebreak && tiebreak->shape() != soft.shape()) {
    throw ShapeError("trunc: tiebreak shape " + shape_string(tiebreak->shape()) +
                     " does not match " + shape_string(soft.shape()));
  }
  if (k > d) {
    throw DomainError("trunc: k = " + std::to_string(k) + " exceeds length " +
                      std::to_string(d));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row_tiebreak = tiebreak ? tiebreak->data().subspan(r * d, d)
                                       : std::span<const double>{};
    for (std::size_t i : top_indices(soft.data().subspan(r * d, d), k, row_tiebreak)) {
      hard[r * d + i] = 1.0;
    }
  }
  return hard;
}

std::map<std::uint32_t, double> WrsDistribution::subsets() const {
  std::map<std::uint32_t, double> out;
  for (const auto& [tuple, p] : ordered) out[subset_mask(tuple)] += p;
  return out;
}

double WrsDistribution::total() const {
  double s = 0.0;
  for (const auto& [tuple, p] : ordered) s += p;
  return s;
}

WrsDistribution exact_wrs_distribution(std::span<const double> alpha,
                                       std::size_t k) {
  if (alpha.size() > kMaxEnumerationDim) {
    throw DomainError("exact_wrs_distribution: d = " +
                      std::to_string(alpha.size()) +
                      " exceeds enumeration limit " +
                      std::to_string(kMaxEnumerationDim));
  }
  if (k < 1 || k > alpha.size()) {
    throw DomainError("exact_wrs_distribution: k outside [1, d]");
  }
  for (double a : alpha) {
    if (!(a > 0.0)) throw DomainError("exact_wrs_distribution: weights must be positive");
  }
  WrsDistribution out;
  out.d = alpha.size();
  out.k = k;
  std::vector<std::size_t> prefix;
  std::vector<bool> used(alpha.size(), false);
  const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  recurse(alpha, k, prefix, used, total, 1.0, out);
  return out;
}

std::vector<std::size_t> wrs_reference_sampler(std::span<const double> alpha,
                                               std::size_t k, Rng& rng) {
  std::vector<double> keys(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] > 0.0)) throw DomainError("wrs_reference_sampler: weights must be positive");
    // log(u^{1/alpha}) keeps the ordering and avoids underflow for tiny alpha.
    keys[i] = std::log(rng.uniform_open()) / alpha[i];
  }
  return top_indices(keys, k);
}

std::uint32_t subset_mask(std::span<const std::size_t> indices) {
  std::uint32_t m = 0;
  for (std::size_t i : indices) m |= (1u << i);
  return m;
}

}  // namespace copsel
