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

#ifndef COPSEL_RANDOM_HPP_
#define COPSEL_RANDOM_HPP_

#include <cstdint>
#include <random>

#include "copsel/tensor.hpp"

namespace copsel {

// Seeded random stream. Independent streams for parallel or nested work are
// obtained with derive(), never by sharing one Rng.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

  Rng derive(std::uint64_t stream) const {
    return Rng(mix(seed_ ^ mix(stream + 0x9e3779b97f4a7c15ULL)));
  }

  double uniform() { return std::uniform_real_distribution<double>()(engine_); }
  // Uniform on the open interval (0, 1).
  double uniform_open();
  double normal() { return normal_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

  Tensor normal_tensor(Shape shape);

  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

inline double Rng::uniform_open() {
  double u = 0.0;
  do {
    u = uniform();
  } while (u <= 0.0);
  return u;
}

inline Tensor Rng::normal_tensor(Shape shape) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = normal();
  return t;
}

}  // namespace copsel

#endif  // COPSEL_RANDOM_HPP_
