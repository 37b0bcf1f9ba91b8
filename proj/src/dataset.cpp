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

#include "copsel/dataset.hpp"

#include <algorithm>
#include <string>

#include "copsel/errors.hpp"

namespace copsel {

void Dataset::validate() const {
  if (x.rank() != 2) {
    throw ShapeError("dataset: features must be [n, d], got " +
                     shape_string(x.shape()));
  }
  if (x.dim(0) != y.size()) {
    throw ShapeError("dataset: " + std::to_string(x.dim(0)) + " rows but " +
                     std::to_string(y.size()) + " labels");
  }
  if (!relevant.empty() && relevant.size() != y.size()) {
    throw ShapeError("dataset: " + std::to_string(relevant.size()) +
                     " ground-truth sets for " + std::to_string(y.size()) +
                     " rows");
  }
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
      throw DomainError("dataset: label " + std::to_string(label) +
                        " outside [0, " + std::to_string(n_classes) + ")");
    }
  }
  for (const FeatureSet& s : relevant) {
    for (std::size_t i : s) {
      if (i >= dim()) throw DomainError("dataset: relevant index out of range");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> index) const {
  const std::size_t d = dim();
  Dataset out;
  out.n_classes = n_classes;
  out.x = Tensor(Shape{index.size(), d});
  out.y.reserve(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) {
    const std::size_t src = index[r];
    if (src >= size()) throw DomainError("dataset: row index out of range");
    std::copy_n(x.data().begin() + src * d, d, out.x.data().begin() + r * d);
    out.y.push_back(y[src]);
    if (!relevant.empty()) out.relevant.push_back(relevant[src]);
  }
  return out;
}

}  // namespace copsel
