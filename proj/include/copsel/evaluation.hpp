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

#ifndef COPSEL_EVALUATION_HPP_
#define COPSEL_EVALUATION_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "copsel/copula.hpp"
#include "copsel/dataset.hpp"
#include "copsel/random.hpp"
#include "copsel/samplers.hpp"
#include "copsel/tensor.hpp"

namespace copsel {

struct SelectionMetrics {
  double tpr = 0.0;  // percent
  double fdr = 0.0;  // percent
  std::size_t n_samples = 0;
  double mean_selected = 0.0;
};

// Macro-averaged over samples. An empty selection scores TPR 0 and FDR 0.
SelectionMetrics tpr_fdr(const Tensor& masks,
                         const std::vector<FeatureSet>& truth);

// Percent of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const Tensor& probs, std::span<const int> labels);

struct TheoremCheckReport {
  std::string kind;  // "theorem1" | "theorem2"
  double tv_distance = 0.0;
  double match_rate = 0.0;
  std::size_t n_draws = 0;
  std::vector<double> alpha;
  std::size_t k = 0;
  double temperature = 0.0;
  double tau = 0.0;
  // Empirical frequency per unordered subset (bitmask keys).
  std::map<std::uint32_t, double> empirical;
};

// Hard top-k masks under independent noise against the exact WRS law; TV
// distance over unordered subsets. Requires d <= kMaxEnumerationDim.
TheoremCheckReport verify_theorem1(std::span<const double> alpha,
                                   std::size_t k, double temperature,
                                   std::size_t n_draws, Rng& rng,
                                   double delta = kDefaultTopkDelta);

// Hard top-k masks with an all-ones loading and correlation scale tau;
// match_rate is the fraction equal to the top-k of alpha.
TheoremCheckReport verify_theorem2(std::span<const double> alpha,
                                   std::size_t k, double temperature,
                                   double tau, std::size_t n_draws, Rng& rng,
                                   double delta = kDefaultTopkDelta);

struct CopulaCheckReport {
  std::size_t n_draws = 0;
  std::vector<double> ks_statistic;  // per coordinate, vs Uniform(0, 1)
  std::vector<double> ks_pvalue;
  Tensor target;     // R
  Tensor empirical;  // Pearson correlation of Phi^{-1}(u)
  double max_correlation_error = 0.0;
};

// Draws from a shared model built from plain tensors.
CopulaCheckReport copula_marginal_check(const Tensor& factor, double sigma,
                                        double tau, CovarianceForm form,
                                        std::size_t n_draws, Rng& rng);

// One-sample KS statistic of `sample` against Uniform(0, 1).
double ks_statistic_uniform(std::vector<double> sample);
// Asymptotic Kolmogorov survival probability with the Stephens correction.
double ks_pvalue(double statistic, std::size_t n);

double total_variation(const std::map<std::uint32_t, double>& p,
                       const std::map<std::uint32_t, double>& q);

// Pearson correlation matrix of the columns of x [n, d].
Tensor pearson_correlation(const Tensor& x);

}  // namespace copsel

#endif  // COPSEL_EVALUATION_HPP_
