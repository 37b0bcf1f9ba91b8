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
#include <cmath>

#include "copsel/errors.hpp"
#include "copsel/experiment.hpp"

namespace copsel {
namespace {

template <typename T>
T param(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("verify: bad value for '") + key + "': " + e.what());
  }
}

Json subsets_json(const std::map<std::uint32_t, double>& freq, std::size_t d) {
  Json out = Json::object();
  for (const auto& [mask, p] : freq) {
    std::string key;
    for (std::size_t i = 0; i < d; ++i) {
      if (mask & (1u << i)) key += (key.empty() ? "" : "|") + std::to_string(i + 1);
    }
    out[key] = p;
  }
  return out;
}

}  // namespace

VerifyOutcome run_verify(const std::string& which, const Json& params) {
  if (!params.is_object()) throw FormatError("verify: parameters must be an object");
  VerifyOutcome out;
  if (which == "theorem1" || which == "theorem2") {
    const auto alpha = param(params, "alpha", std::vector<double>{1, 2, 3, 4});
    const auto k = param<std::size_t>(params, "k", 2);
    const double t = param(params, "t", 0.01);
    const double delta = param(params, "delta", kDefaultTopkDelta);
    Rng rng(param<std::uint64_t>(params, "seed", 1));
    if (which == "theorem1") {
      const auto n = param<std::size_t>(params, "n", 100000);
      const double max_tv = param(params, "max_tv", 0.02);
      const TheoremCheckReport r = verify_theorem1(alpha, k, t, n, rng, delta);
      out.passed = r.tv_distance <= max_tv;
      out.report = Json{{"check", which}, {"alpha", alpha}, {"k", k}, {"t", t},
                        {"delta", delta}, {"n_draws", n}, {"tv_distance", r.tv_distance},
                        {"max_tv", max_tv}, {"passed", out.passed},
                        {"empirical", subsets_json(r.empirical, alpha.size())}};
    } else {
      const auto n = param<std::size_t>(params, "n", 10000);
      const double tau = param(params, "tau", 1e4);
      const double min_match = param(params, "min_match", 0.999);
      const TheoremCheckReport r = verify_theorem2(alpha, k, t, tau, n, rng, delta);
      out.passed = r.match_rate >= min_match;
      out.report = Json{{"check", which}, {"alpha", alpha}, {"k", k}, {"t", t},
                        {"delta", delta}, {"tau", tau}, {"n_draws", n},
                        {"match_rate", r.match_rate}, {"min_match", min_match},
                        {"passed", out.passed}};
    }
    return out;
  }
  if (which == "copula") {
    const auto d = param<std::size_t>(params, "d", 5);
    const double r12 = param(params, "r12", 0.8);
    const auto n = param<std::size_t>(params, "n", 100000);
    const double min_p = param(params, "min_p", 0.01);
    const double max_err = param(params, "max_corr_error", 0.02);
    if (d < 2) throw DomainError("verify: copula check needs d >= 2");
    if (!(r12 >= 0.0 && r12 < 1.0)) throw DomainError("verify: r12 must be in [0, 1)");
    Tensor factor(Shape{d, 1});
    factor.at(0, 0) = factor.at(1, 0) = std::sqrt(r12 / (1.0 - r12));
    Rng rng(param<std::uint64_t>(params, "seed", 78));
    const CopulaCheckReport r = copula_marginal_check(
        factor, 1.0, 0.0, CovarianceForm::kFactorPlusNoise, n, rng);
    const double min_seen = *std::min_element(r.ks_pvalue.begin(), r.ks_pvalue.end());
    out.passed = min_seen >= min_p && r.max_correlation_error <= max_err;
    out.report = Json{{"check", which}, {"d", d}, {"r12", r12}, {"n_draws", n},
                      {"ks_statistic", r.ks_statistic}, {"ks_pvalue", r.ks_pvalue},
                      {"min_p", min_p}, {"empirical_r12", r.empirical.at(0, 1)},
                      {"max_correlation_error", r.max_correlation_error},
                      {"max_corr_error", max_err}, {"passed", out.passed}};
    return out;
  }
  throw DomainError("verify: unknown check '" + which + "', expected theorem1|theorem2|copula");
}

}  // namespace copsel
