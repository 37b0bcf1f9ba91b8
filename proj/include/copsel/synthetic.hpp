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

// Synthetic benchmark families Syn1..Syn6. Feature indices in this header
// are 0-based; x_1 in the family formulas is column 0.

#ifndef COPSEL_SYNTHETIC_HPP_
#define COPSEL_SYNTHETIC_HPP_

#include <cstdint>
#include <span>
#include <string>

#include "copsel/dataset.hpp"
#include "copsel/random.hpp"

namespace copsel {

enum class Family { kSyn1 = 1, kSyn2, kSyn3, kSyn4, kSyn5, kSyn6 };

struct SyntheticSpec {
  Family family = Family::kSyn1;
  std::size_t d = 11;
  bool correlated = false;  // Sigma_ij = 0.5^|i-j| over all d coordinates
  std::size_t n_train = 10000;
  std::size_t n_test = 10000;
  std::uint64_t seed = 0;
  // Default P(y=1|x) = 1/(1+exp(gamma)); true flips to 1/(1+exp(-gamma)).
  bool conventional_sign = false;
  // Whether x_11 counts as relevant for the switching families.
  bool switch_relevant = true;

  // Throws DomainError: d < 11 or zero sample counts.
  void validate() const;
};

inline constexpr std::size_t kSwitchFeature = 10;  // x_11
inline constexpr std::size_t kRowsPerBlock = 1000;

// Rows are generated in blocks of kRowsPerBlock, each from its own derived
// stream, so output does not depend on how blocks are scheduled.
Tensor gen_features(const SyntheticSpec& spec, std::size_t n, Rng& rng);

double gamma(Family family, std::span<const double> x);
double label_probability(double gamma_value, bool conventional_sign = false);
int draw_label(double gamma_value, Rng& rng, bool conventional_sign = false);
FeatureSet ground_truth(Family family, std::span<const double> x,
                        bool switch_relevant = true);

struct SyntheticSplit {
  Dataset train;
  Dataset test;
};

// Deterministic in (spec); train and test come from separate streams.
SyntheticSplit generate(const SyntheticSpec& spec);
Dataset generate_rows(const SyntheticSpec& spec, std::size_t n, Rng& rng);

std::string family_name(Family f);
// Accepts "syn1".."syn6" (case-insensitive) or "1".."6".
Family parse_family(const std::string& s);

}  // namespace copsel

#endif  // COPSEL_SYNTHETIC_HPP_
