// Central finite-difference oracle for tape gradients. Test-only.

#ifndef COPSEL_TESTS_GRADCHECK_HPP_
#define COPSEL_TESTS_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "copsel/autodiff.hpp"

namespace copsel::testing {

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;  // worst over inputs
  std::vector<Tensor> analytic;
  std::vector<Tensor> numeric;
};

// Relative error ||a - n||_inf / max(||a||_inf, ||n||_inf, floor).
inline double relative_error(const Tensor& a, const Tensor& n,
                             double floor = 1e-8) {
  double diff = 0.0, scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::fabs(a[i] - n[i]));
    scale = std::max({scale, std::fabs(a[i]), std::fabs(n[i])});
  }
  return diff / scale;
}

inline double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value().item();
}

inline GradCheckResult gradcheck(const ScalarFn& f,
                                 const std::vector<Tensor>& inputs,
                                 double step = 1e-5) {
  GradCheckResult res;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
    Var root = f(tape, vars);
    tape.backward(root);
    for (Var v : vars) res.analytic.push_back(tape.grad(v));
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor num(inputs[k].shape());
    std::vector<Tensor> probe = inputs;
    for (std::size_t i = 0; i < num.size(); ++i) {
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + step;
      const double up = evaluate(f, probe);
      probe[k][i] = x0 - step;
      const double down = evaluate(f, probe);
      probe[k][i] = x0;
      num[i] = (up - down) / (2.0 * step);
    }
    res.max_rel_error =
        std::max(res.max_rel_error, relative_error(res.analytic[k], num));
    res.numeric.push_back(std::move(num));
  }
  return res;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = dist(rng);
  return t;
}

// Random symmetric positive definite [d, d]: A A^T + d I.
inline Tensor random_spd(std::size_t d, std::mt19937_64& rng) {
  Tensor a = random_tensor({d, d}, rng);
  Tensor s({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += a.at(i, k) * a.at(j, k);
      s.at(i, j) = acc + (i == j ? static_cast<double>(d) : 0.0);
    }
  }
  return s;
}

}  // namespace copsel::testing

#endif  // COPSEL_TESTS_GRADCHECK_HPP_
