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

#include "copsel/evaluation.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "copsel/errors.hpp"
#include "copsel/samplers.hpp"

namespace copsel {

SelectionMetrics tpr_fdr(const Tensor& masks,
                         const std::vector<FeatureSet>& truth) {
  if (masks.rank() != 2 || masks.dim(0) != truth.size()) {
    throw ShapeError("tpr_fdr: " + std::to_string(truth.size()) +
                     " truth sets for masks " + shape_string(masks.shape()));
  }
  const std::size_t n = masks.dim(0), d = masks.dim(1);
  SelectionMetrics m;
  m.n_samples = n;
  if (n == 0) return m;
  double tpr = 0.0, fdr = 0.0, selected = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t hits = 0, picked = 0;
    for (std::size_t i = 0; i < d; ++i) {
      if (masks.at(r, i) != 0.0) ++picked;
    }
    for (std::size_t i : truth[r]) {
      if (i >= d) throw DomainError("tpr_fdr: truth index out of range");
      if (masks.at(r, i) != 0.0) ++hits;
    }
    selected += static_cast<double>(picked);
    if (picked == 0) continue;
    if (!truth[r].empty()) {
      tpr += static_cast<double>(hits) / static_cast<double>(truth[r].size());
    }
    fdr += static_cast<double>(picked - hits) / static_cast<double>(picked);
  }
  const double nn = static_cast<double>(n);
  m.tpr = 100.0 * tpr / nn;
  m.fdr = 100.0 * fdr / nn;
  m.mean_selected = selected / nn;
  return m;
}

double accuracy(const Tensor& probs, std::span<const int> labels) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size()) {
    throw ShapeError("accuracy: " + std::to_string(labels.size()) +
                     " labels for predictions " + shape_string(probs.shape()));
  }
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  if (n == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (probs.at(r, j) > probs.at(r, best)) best = j;
    }
    if (static_cast<int>(best) == labels[r]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

namespace {

// Hard masks from the relaxed top-k sampler under a shared correlation
// model, one row per draw.
Tensor draw_topk_masks(std::span<const double> alpha, std::size_t k,
                       double temperature, double delta, double tau,
                       std::size_t n_draws, Rng& rng) {
  const std::size_t d = alpha.size();
  Tape tape;
  CorrelationModel model;
  model.form = CovarianceForm::kScaledFactor;
  model.tau = tau;
  model.factor = tape.constant(Tensor(Shape{d, 1}, 1.0));
  NoiseDraw noise = sample_correlated_uniform(model, rng, n_draws);
  Tensor a(Shape{n_draws, d});
  for (std::size_t r = 0; r < n_draws; ++r) {
    std::copy(alpha.begin(), alpha.end(), a.data().begin() + r * d);
  }
  SamplerParams params;
  params.temperature = temperature;
  params.delta = delta;
  params.k = k;
  return topk_relaxed(tape.constant(std::move(a)), noise.u, params).hard;
}

std::map<std::uint32_t, double> subset_frequencies(const Tensor& masks) {
  const std::size_t n = masks.dim(0), d = masks.dim(1);
  std::map<std::uint32_t, double> freq;
  for (std::size_t r = 0; r < n; ++r) {
    std::uint32_t key = 0;
    for (std::size_t i = 0; i < d; ++i) {
      if (masks.at(r, i) != 0.0) key |= (1u << i);
    }
    freq[key] += 1.0;
  }
  for (auto& [key, c] : freq) c /= static_cast<double>(n);
  return freq;
}

}  // namespace

double total_variation(const std::map<std::uint32_t, double>& p,
                       const std::map<std::uint32_t, double>& q) {
  double tv = 0.0;
  for (const auto& [key, pv] : p) {
    auto it = q.find(key);
    tv += std::fabs(pv - (it == q.end() ? 0.0 : it->second));
  }
  for (const auto& [key, qv] : q) {
    if (!p.contains(key)) tv += qv;
  }
  return 0.5 * tv;
}

TheoremCheckReport verify_theorem1(std::span<const double> alpha,
                                   std::size_t k, double temperature,
                                   std::size_t n_draws, Rng& rng,
                                   double delta) {
  if (alpha.size() > kMaxEnumerationDim) {
    throw DomainError("verify_theorem1: d = " + std::to_string(alpha.size()) +
                      " exceeds enumeration limit " +
                      std::to_string(kMaxEnumerationDim));
  }
  if (n_draws == 0) throw DomainError("verify_theorem1: n_draws must be > 0");
  const WrsDistribution exact = exact_wrs_distribution(alpha, k);
  const Tensor masks =
      draw_topk_masks(alpha, k, temperature, delta, 0.0, n_draws, rng);
  TheoremCheckReport rep;
  rep.kind = "theorem1";
  rep.n_draws = n_draws;
  rep.alpha.assign(alpha.begin(), alpha.end());
  rep.k = k;
  rep.temperature = temperature;
  rep.empirical = subset_frequencies(masks);
  rep.tv_distance = total_variation(rep.empirical, exact.subsets());
  rep.match_rate = std::max(0.0, 1.0 - rep.tv_distance);
  return rep;
}

TheoremCheckReport verify_theorem2(std::span<const double> alpha,
                                   std::size_t k, double temperature,
                                   double tau, std::size_t n_draws, Rng& rng,
                                   double delta) {
  if (n_draws == 0) throw DomainError("verify_theorem2: n_draws must be > 0");
  const Tensor masks =
      draw_topk_masks(alpha, k, temperature, delta, tau, n_draws, rng);
  const std::uint32_t target = subset_mask(top_indices(alpha, k));
  TheoremCheckReport rep;
  rep.kind = "theorem2";
  rep.n_draws = n_draws;
  rep.alpha.assign(alpha.begin(), alpha.end());
  rep.k = k;
  rep.temperature = temperature;
  rep.tau = tau;
  rep.empirical = subset_frequencies(masks);
  auto it = rep.empirical.find(target);
  rep.match_rate = it == rep.empirical.end() ? 0.0 : it->second;
  rep.tv_distance = 1.0 - rep.match_rate;
  return rep;
}

double ks_statistic_uniform(std::vector<double> sample) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double dmax = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = std::clamp(sample[i], 0.0, 1.0);
    dmax = std::max({dmax, static_cast<double>(i + 1) / n - f,
                     f - static_cast<double>(i) / n});
  }
  return dmax;
}

double ks_pvalue(double statistic, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * statistic;
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0, sign = 1.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
    sum += term;
    if (std::fabs(term) < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

Tensor pearson_correlation(const Tensor& x) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> mu(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) mu[i] += x.at(r, i);
  }
  for (double& m : mu) m /= static_cast<double>(n);
  Tensor cov(Shape{d, d});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = x.at(r, i) - mu[i];
      for (std::size_t j = i; j < d; ++j) cov.at(i, j) += xi * (x.at(r, j) - mu[j]);
    }
  }
  Tensor corr(Shape{d, d});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      const double c = cov.at(i, j) / std::sqrt(cov.at(i, i) * cov.at(j, j));
      corr.at(i, j) = c;
      corr.at(j, i) = c;
    }
  }
  return corr;
}

CopulaCheckReport copula_marginal_check(const Tensor& factor, double sigma,
                                        double tau, CovarianceForm form,
                                        std::size_t n_draws, Rng& rng) {
  if (n_draws < 2) throw DomainError("copula_marginal_check: need >= 2 draws");
  Tape tape;
  CorrelationModel model;
  model.factor = tape.constant(factor);
  model.sigma = tape.constant(Tensor::scalar(sigma));
  model.tau = tau;
  model.form = form;
  Var corr = normalize(build_covariance(model));
  NoiseDraw draw = sample_correlated_uniform(model, rng, n_draws);
  const Tensor& u = draw.u.value();
  const std::size_t d = u.dim(1);

  CopulaCheckReport rep;
  rep.n_draws = n_draws;
  rep.target = corr.value();
  boost::math::normal_distribution<double> std_normal;
  Tensor latent(u.shape());
  std::vector<double> column(n_draws);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t r = 0; r < n_draws; ++r) {
      column[r] = u.at(r, i);
      latent.at(r, i) = boost::math::quantile(std_normal, u.at(r, i));
    }
    const double stat = ks_statistic_uniform(column);
    rep.ks_statistic.push_back(stat);
    rep.ks_pvalue.push_back(ks_pvalue(stat, n_draws));
  }
  rep.empirical = pearson_correlation(latent);
  for (std::size_t i = 0; i < rep.target.size(); ++i) {
    rep.max_correlation_error =
        std::max(rep.max_correlation_error,
                 std::fabs(rep.empirical[i] - rep.target[i]));
  }
  return rep;
}

}  // namespace copsel
