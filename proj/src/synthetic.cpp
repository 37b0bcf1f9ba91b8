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

#include "copsel/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "copsel/errors.hpp"

namespace copsel {
namespace {

double product12(std::span<const double> x) { return x[0] * x[1]; }

double squares(std::span<const double> x, std::size_t first, std::size_t count) {
  double s = 0.0;
  for (std::size_t i = first; i < first + count; ++i) s += x[i] * x[i];
  return s - 4.0;
}

double trig(std::span<const double> x) {
  return -10.0 * std::sin(2.0 * x[6]) + 2.0 * std::fabs(x[7]) + x[8] +
         std::exp(-x[9]);
}

FeatureSet range(std::size_t first, std::size_t last) {
  FeatureSet s;
  for (std::size_t i = first; i <= last; ++i) s.push_back(i);
  return s;
}

FeatureSet with_switch(FeatureSet s, bool include) {
  if (include) s.push_back(kSwitchFeature);
  return s;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (d < 11) {
    throw DomainError("synthetic: d = " + std::to_string(d) +
                      ", the families need at least 11 features");
  }
  if (n_train == 0 || n_test == 0) {
    throw DomainError("synthetic: sample counts must be positive");
  }
}

Tensor gen_features(const SyntheticSpec& spec, std::size_t n, Rng& rng) {
  spec.validate();
  const std::size_t d = spec.d;
  Tensor x(Shape{n, d});
  auto v = x.data();
  // The AR(1) Cholesky factor has a closed form: each coordinate is half the
  // previous one plus sqrt(3/4) fresh noise.
  const double innovation = std::sqrt(0.75);
  for (std::size_t block = 0; block * kRowsPerBlock < n; ++block) {
    Rng local = rng.derive(block);
    const std::size_t end = std::min(n, (block + 1) * kRowsPerBlock);
    for (std::size_t r = block * kRowsPerBlock; r < end; ++r) {
      double* row = v.data() + r * d;
      for (std::size_t i = 0; i < d; ++i) row[i] = local.normal();
      if (spec.correlated) {
        for (std::size_t i = 1; i < d; ++i) {
          row[i] = 0.5 * row[i - 1] + innovation * row[i];
        }
      }
    }
  }
  return x;
}

double gamma(Family family, std::span<const double> x) {
  if (x.size() < 11) throw DomainError("gamma: need at least 11 features");
  const bool negative = x[kSwitchFeature] < 0.0;
  switch (family) {
    case Family::kSyn1: return product12(x);
    case Family::kSyn2: return squares(x, 0, 3);
    case Family::kSyn3: return trig(x);
    case Family::kSyn4: return negative ? product12(x) : squares(x, 2, 4);
    case Family::kSyn5: return negative ? product12(x) : trig(x);
    case Family::kSyn6: return negative ? squares(x, 2, 4) : trig(x);
  }
  throw DomainError("gamma: unknown family");
}

double label_probability(double gamma_value, bool conventional_sign) {
  const double g = conventional_sign ? -gamma_value : gamma_value;
  // 1/(1+e^g), written to stay accurate in both tails.
  return g >= 0.0 ? std::exp(-g) / (1.0 + std::exp(-g)) : 1.0 / (1.0 + std::exp(g));
}

int draw_label(double gamma_value, Rng& rng, bool conventional_sign) {
  return rng.bernoulli(label_probability(gamma_value, conventional_sign)) ? 1 : 0;
}

FeatureSet ground_truth(Family family, std::span<const double> x,
                        bool switch_relevant) {
  if (x.size() < 11) throw DomainError("ground_truth: need at least 11 features");
  const bool negative = x[kSwitchFeature] < 0.0;
  switch (family) {
    case Family::kSyn1: return range(0, 1);
    case Family::kSyn2: return range(0, 2);
    case Family::kSyn3: return range(6, 9);
    case Family::kSyn4:
      return with_switch(negative ? range(0, 1) : range(2, 5), switch_relevant);
    case Family::kSyn5:
      return with_switch(negative ? range(0, 1) : range(6, 9), switch_relevant);
    case Family::kSyn6:
      return with_switch(negative ? range(2, 5) : range(6, 9), switch_relevant);
  }
  throw DomainError("ground_truth: unknown family");
}

Dataset generate_rows(const SyntheticSpec& spec, std::size_t n, Rng& rng) {
  Dataset ds;
  ds.n_classes = 2;
  ds.x = gen_features(spec, n, rng);
  Rng labels = rng.derive(0x6c61626c);
  ds.y.reserve(n);
  ds.relevant.reserve(n);
  const std::size_t d = spec.d;
  for (std::size_t r = 0; r < n; ++r) {
    std::span<const double> row(ds.x.data().data() + r * d, d);
    ds.y.push_back(draw_label(gamma(spec.family, row), labels, spec.conventional_sign));
    ds.relevant.push_back(ground_truth(spec.family, row, spec.switch_relevant));
  }
  return ds;
}

SyntheticSplit generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  Rng train_rng = root.derive(1);
  Rng test_rng = root.derive(2);
  return {generate_rows(spec, spec.n_train, train_rng),
          generate_rows(spec, spec.n_test, test_rng)};
}

std::string family_name(Family f) {
  return "syn" + std::to_string(static_cast<int>(f));
}

Family parse_family(const std::string& s) {
  std::string t = s;
  std::transform(t.begin(), t.end(), t.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (t.rfind("syn", 0) == 0) t = t.substr(3);
  if (t.size() == 1 && t[0] >= '1' && t[0] <= '6') {
    return static_cast<Family>(t[0] - '0');
  }
  throw FormatError("unknown synthetic family '" + s + "', expected syn1..syn6");
}

}  // namespace copsel
