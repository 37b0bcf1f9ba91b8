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

#ifndef COPSEL_ERRORS_HPP_
#define COPSEL_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace copsel {

// Operand shapes are incompatible for the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An argument lies outside the domain of the operation (log of a
// non-positive value, non-positive temperature, k > d, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Cholesky factorization hit a non-positive pivot.
class FactorizationError : public std::runtime_error {
 public:
  FactorizationError(std::size_t pivot, double value)
      : std::runtime_error("cholesky: non-positive pivot " +
                           std::to_string(value) + " at index " +
                           std::to_string(pivot)),
        pivot_(pivot) {}

  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

// An operation produced NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file or serialized object.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace copsel

#endif  // COPSEL_ERRORS_HPP_
