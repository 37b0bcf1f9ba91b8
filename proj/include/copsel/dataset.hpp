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

#ifndef COPSEL_DATASET_HPP_
#define COPSEL_DATASET_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "copsel/tensor.hpp"

namespace copsel {

using FeatureSet = std::vector<std::size_t>;  // 0-based feature indices

// Row-major features with integer labels. `relevant` is empty for data
// without ground truth, otherwise one set per row.
struct Dataset {
  Tensor x;  // [n, d]
  std::vector<int> y;
  std::vector<FeatureSet> relevant;
  std::size_t n_classes = 2;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return x.rank() == 2 ? x.dim(1) : 0; }
  bool has_truth() const { return !relevant.empty(); }

  // Throws ShapeError on inconsistent fields.
  void validate() const;
  // Rows in `index` order.
  Dataset subset(std::span<const std::size_t> index) const;
};

}  // namespace copsel

#endif  // COPSEL_DATASET_HPP_
