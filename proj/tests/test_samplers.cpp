#include <algorithm>
#include <cmath>
#include <random>

#include "copsel/copula.hpp"
#include "copsel/errors.hpp"
#include "copsel/evaluation.hpp"
#include "copsel/samplers.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace copsel;
using copsel::testing::random_tensor;

namespace {

RelaxedMask binary_at(Tape& tape, std::vector<double> alpha,
                      std::vector<double> u, double t) {
  const std::size_t d = alpha.size();
  SamplerParams p;
  p.temperature = t;
  return binary_mask(tape.constant(Tensor({1, d}, std::move(alpha))),
                     tape.constant(Tensor({1, d}, std::move(u))), p);
}

RelaxedMask topk_at(Tape& tape, const Tensor& alpha, const Tensor& u,
                    std::size_t k, double t, TopkTrace* trace = nullptr) {
  SamplerParams p;
  p.temperature = t;
  p.k = k;
  return topk_relaxed(tape.constant(alpha), tape.constant(u), p, trace);
}

Tensor rows(std::size_t n, std::span<const double> v) {
  Tensor t(Shape{n, v.size()});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy(v.begin(), v.end(), t.data().begin() + r * v.size());
  }
  return t;
}

}  // namespace

TEST_CASE("binary mask values") {
  Tape tape;
  // u = 0.5 gives g = 0.
  for (double t : {0.1, 1.0, 3.0}) {
    RelaxedMask m = binary_at(tape, {0.0}, {0.5}, t);
    CHECK(m.soft.value()[0] == 0.5);
    CHECK(m.hard[0] == 0.0);  // round half to even
  }
  // g + alpha = ln 3 at t = 1 gives 0.75.
  RelaxedMask m = binary_at(tape, {std::log(3.0)}, {0.5}, 1.0);
  CHECK(m.soft.value()[0] == doctest::Approx(0.75).epsilon(1e-14));
  RelaxedMask sat = binary_at(tape, {40.0 * 0.5}, {0.5}, 0.5);
  CHECK(sat.soft.value()[0] >= 1.0 - 1e-15);
  CHECK(sat.hard[0] == 1.0);
}

TEST_CASE("binary soft mask is increasing in alpha for fixed noise") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> unif(0.01, 0.99), a(-4, 4);
  for (int trial = 0; trial < 500; ++trial) {
    Tape tape;
    const double u = unif(gen), a0 = a(gen), bump = 0.1 + unif(gen);
    const double lo = binary_at(tape, {a0}, {u}, 2.0).soft.value()[0];
    const double hi = binary_at(tape, {a0 + bump}, {u}, 2.0).soft.value()[0];
    CHECK(hi > lo);
  }
}

TEST_CASE("marginal inclusion probability") {
  CHECK(marginal_inclusion_probability(0.0) == 0.5);
  CHECK(marginal_inclusion_probability(800.0) == 1.0);
  CHECK(marginal_inclusion_probability(-800.0) == 0.0);

  // Monte-Carlo frequency of hard = 1 under independent noise.
  const std::vector<double> alpha = {-2.0, -0.5, 0.0, 0.7, 2.5};
  const std::size_t n = 100000;
  Tape tape;
  Rng rng(19);
  NoiseDraw noise = independent_uniform(tape, n, alpha.size(), rng);
  SamplerParams p;
  p.temperature = 0.1;
  RelaxedMask m = binary_mask(tape.constant(rows(n, alpha)), noise.u, p);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    double ones = 0.0;
    for (std::size_t r = 0; r < n; ++r) ones += m.hard.at(r, i);
    CHECK(std::fabs(ones / n - marginal_inclusion_probability(alpha[i])) <= 0.01);
  }
}

TEST_CASE("top-k relaxed examples") {
  Tape tape;
  SUBCASE("tied keys split mass and break ties toward the lower index") {
    const double u = std::exp(-1.0);
    RelaxedMask m = topk_at(tape, Tensor({1, 2}, {1.0, 1.0}), Tensor({1, 2}, {u, u}), 1, 1.0);
    CHECK(m.soft.value()[0] == doctest::Approx(0.5));
    CHECK(m.soft.value()[1] == doctest::Approx(0.5));
    CHECK(m.hard.values() == std::vector<double>{1, 0});
  }
  SUBCASE("k = d selects everything") {
    RelaxedMask m = topk_at(tape, Tensor({1, 3}, {1, 2, 3}), Tensor({1, 3}, {0.2, 0.5, 0.9}), 3, 0.5);
    double total = 0.0;
    for (double v : m.soft.value().data()) total += v;
    CHECK(total == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(m.hard.values() == std::vector<double>{1, 1, 1});
  }
  SUBCASE("invalid inputs") {
    CHECK_THROWS_AS(topk_at(tape, Tensor({1, 2}, {1.0, 0.0}), Tensor({1, 2}, {0.3, 0.3}), 1, 1.0), DomainError);
    CHECK_THROWS_AS(topk_at(tape, Tensor({1, 2}, {1.0, 2.0}), Tensor({1, 2}, {0.3, 0.3}), 3, 1.0), DomainError);
    CHECK_THROWS_AS(topk_at(tape, Tensor({1, 2}, {1.0, 2.0}), Tensor({1, 2}, {0.3, 0.3}), 1, 0.0), DomainError);
  }
  SUBCASE("each iterate is a distribution") {
    TopkTrace trace;
    topk_at(tape, Tensor({2, 4}, {1, 2, 3, 4, 0.5, 0.5, 9, 1}),
            Tensor({2, 4}, {0.1, 0.4, 0.7, 0.2, 0.9, 0.3, 0.5, 0.6}), 3, 0.2, &trace);
    REQUIRE(trace.probs.size() == 3);
    for (const Tensor& p : trace.probs) {
      for (std::size_t r = 0; r < 2; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < 4; ++i) s += p.at(r, i);
        CHECK(std::fabs(s - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("top-k soft mass equals k on random inputs") {
  std::mt19937_64 gen(41);
  std::uniform_real_distribution<double> unif(1e-6, 1.0 - 1e-6);
  std::uniform_real_distribution<double> weight(0.01, 20.0);
  std::uniform_real_distribution<double> temp(0.01, 5.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 2 + trial % 12;
    const std::size_t k = 1 + trial % d;
    Tensor a({1, d}), u({1, d});
    for (std::size_t i = 0; i < d; ++i) {
      a[i] = weight(gen);
      u[i] = unif(gen);
    }
    Tape tape;
    RelaxedMask m = topk_at(tape, a, u, k, temp(gen));
    double s = 0.0, h = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      s += m.soft.value()[i];
      h += m.hard[i];
    }
    CHECK(std::fabs(s - static_cast<double>(k)) <= 1e-6);
    CHECK(h == static_cast<double>(k));
    for (std::size_t i : top_indices(m.soft.value().data(), k)) CHECK(m.hard[i] == 1.0);
  }
}

TEST_CASE("underflowed soft values are ordered by their keys") {
  // At t = 0.01 the two smallest keys both underflow to soft 0; the hard mask
  // must still drop the smaller key.
  Tape tape;
  const Tensor a({1, 4}, {1.0, 1.0, 1.0, 1.0});
  const Tensor u({1, 4}, {0.9, std::exp(-10.0), 0.8, std::exp(-80.0)});
  RelaxedMask m = topk_at(tape, a, u, 3, 0.01);
  CHECK(m.soft.value()[1] == 0.0);
  CHECK(m.soft.value()[3] == 0.0);
  CHECK(m.hard.values() == std::vector<double>{1, 1, 1, 0});
}

TEST_CASE("hard top-k is invariant to rescaling the weights") {
  std::mt19937_64 gen(43);
  std::uniform_real_distribution<double> unif(1e-3, 1.0 - 1e-3);
  std::uniform_real_distribution<double> weight(0.5, 5.0), factor(0.5, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 3 + trial % 6;
    const std::size_t k = 1 + trial % (d - 1);
    Tensor a({1, d}), u({1, d});
    for (std::size_t i = 0; i < d; ++i) {
      a[i] = weight(gen);
      u[i] = unif(gen);
    }
    Tensor scaled = a;
    const double c = factor(gen);
    for (double& v : scaled.data()) v *= c;
    Tape tape;
    CHECK(topk_at(tape, a, u, k, 0.01).hard.values() ==
          topk_at(tape, scaled, u, k, 0.01).hard.values());
  }
}

TEST_CASE("soft mask approaches the hard mask as temperature drops") {
  std::mt19937_64 gen(47);
  std::uniform_real_distribution<double> unif(1e-3, 1.0 - 1e-3), weight(0.5, 5.0);
  const std::size_t n = 64, d = 6;
  Tensor a({n, d}), u({n, d}), logit({n, d});
  for (std::size_t i = 0; i < n * d; ++i) {
    a[i] = weight(gen);
    u[i] = unif(gen);
    logit[i] = a[i] - 2.75;
  }
  const double temps[] = {1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01};
  auto gap = [&](const RelaxedMask& m) {
    double g = 0.0;
    for (std::size_t i = 0; i < n * d; ++i) {
      g = std::max(g, std::fabs(m.soft.value()[i] - m.hard[i]));
    }
    return g;
  };
  SUBCASE("binary") {
    double previous = 1.0;
    for (double t : temps) {
      Tape tape;
      SamplerParams p;
      p.temperature = t;
      const double g = gap(binary_mask(tape.constant(logit), tape.constant(u), p));
      CHECK(g <= previous);
      previous = g;
    }
  }
  SUBCASE("top-1") {
    double previous = 1.0;
    for (double t : temps) {
      Tape tape;
      const double g = gap(topk_at(tape, a, u, 1, t));
      CHECK(g <= previous);
      previous = g;
    }
  }
  SUBCASE("k >= 2 keeps the hard mask on key order") {
    // The soft gap itself is not monotone for k >= 2: near-tied keys keep
    // it near 1/2 at every t. What must hold is that the hard mask is the
    // top-k of the keys once t is small.
    Tensor keys({n, d});
    for (std::size_t i = 0; i < n * d; ++i) keys[i] = std::log(u[i]) / a[i];
    for (std::size_t k = 2; k <= 4; ++k) {
      const Tensor expected = trunc(keys, k);
      for (double t : {0.1, 0.05, 0.02, 0.01, 0.005}) {
        Tape tape;
        CHECK(topk_at(tape, a, u, k, t).hard.values() == expected.values());
      }
    }
  }
}

TEST_CASE("top-k gradients reach the weights and the noise") {
  std::mt19937_64 gen(53);
  const Tensor w = random_tensor({2, 5}, gen);
  auto res = copsel::testing::gradcheck(
      [&](Tape& tape, const std::vector<Var>& v) {
        SamplerParams p;
        p.temperature = 0.7;
        p.delta = 0.3;
        p.k = 3;
        RelaxedMask m = topk_relaxed(v[0], v[1], p);
        return sum(mul(m.soft, tape.constant(w)));
      },
      {random_tensor({2, 5}, gen, 0.5, 3.0), random_tensor({2, 5}, gen, 0.05, 0.95)});
  CHECK(res.max_rel_error <= 1e-4);
}

TEST_CASE("trunc") {
  CHECK(trunc(Tensor::vector({0.9, 0.1, 0.5}), 2).values() ==
        std::vector<double>{1, 0, 1});
  CHECK(trunc(Tensor::vector({0.3, 0.3, 0.3, 0.3}), 1).values() ==
        std::vector<double>{1, 0, 0, 0});
  CHECK(trunc(Tensor::vector({0.2, 0.7, 0.1}), 3).values() ==
        std::vector<double>{1, 1, 1});
  CHECK_THROWS_AS(trunc(Tensor::vector({0.2, 0.7}), 3), DomainError);
  const Tensor keys = Tensor::vector({-1.0, -3.0, -2.0, -0.5});
  CHECK(trunc(Tensor::vector({0.0, 0.0, 0.0, 0.0}), 2, &keys).values() ==
        std::vector<double>{1, 0, 0, 1});
  const Tensor short_keys = Tensor::vector({1.0});
  CHECK_THROWS_AS(trunc(Tensor::vector({0.2, 0.7}), 1, &short_keys), ShapeError);
}

TEST_CASE("exact WRS distribution") {
  const std::vector<double> even = {1, 1};
  auto d1 = exact_wrs_distribution(even, 1);
  CHECK(d1.ordered.at({0}) == 0.5);
  CHECK(d1.ordered.at({1}) == 0.5);

  const std::vector<double> skew = {1, 3};
  CHECK(exact_wrs_distribution(skew, 1).ordered.at({1}) == 0.75);

  // Unordered pairs for alpha = (1, 2, 3), k = 2, summed by hand over both
  // orders: {1,2}: 1/6*2/5 + 2/6*1/4, {1,3}: 1/6*3/5 + 3/6*1/3,
  // {2,3}: 2/6*3/4 + 3/6*2/3.
  const std::vector<double> three = {1, 2, 3};
  auto d3 = exact_wrs_distribution(three, 2);
  auto sets = d3.subsets();
  CHECK(sets.at(0b011) == doctest::Approx(1.0 / 15 + 1.0 / 12));
  CHECK(sets.at(0b101) == doctest::Approx(0.1 + 1.0 / 6));
  CHECK(sets.at(0b110) == doctest::Approx(0.25 + 1.0 / 3));

  std::mt19937_64 gen(59);
  std::uniform_real_distribution<double> w(0.1, 10.0);
  for (std::size_t d = 1; d <= kMaxEnumerationDim; ++d) {
    std::vector<double> a(d);
    for (double& x : a) x = w(gen);
    for (std::size_t k = 1; k <= d; ++k) {
      CHECK(std::fabs(exact_wrs_distribution(a, k).total() - 1.0) <= 1e-12);
    }
  }
  const std::vector<double> big(9, 1.0);
  CHECK_THROWS_AS(exact_wrs_distribution(big, 2), DomainError);
}

TEST_CASE("reference WRS sampler") {
  Rng rng(61);
  const std::vector<double> degenerate = {1.0, 1e-9, 1e-9};
  int first = 0;
  for (int i = 0; i < 10000; ++i) first += wrs_reference_sampler(degenerate, 1, rng)[0] == 0;
  CHECK(first == 10000);

  const std::vector<double> even = {2.0, 2.0, 2.0, 2.0};
  std::vector<double> freq(4, 0.0);
  for (int i = 0; i < 100000; ++i) freq[wrs_reference_sampler(even, 1, rng)[0]] += 1e-5;
  for (double f : freq) CHECK(std::fabs(f - 0.25) <= 0.01);

  const std::vector<double> alpha = {1, 2, 3, 4};
  std::map<std::uint32_t, double> emp;
  for (int i = 0; i < 100000; ++i) {
    emp[subset_mask(wrs_reference_sampler(alpha, 2, rng))] += 1e-5;
  }
  CHECK(total_variation(emp, exact_wrs_distribution(alpha, 2).subsets()) <= 0.02);
}

TEST_CASE("relaxed top-k under independent noise matches WRS") {
  const std::vector<double> alpha = {1, 2, 3, 4};
  Rng rng(67);
  TheoremCheckReport rep = verify_theorem1(alpha, 2, 0.01, 100000, rng);
  CHECK(rep.tv_distance <= 0.02);
}

TEST_CASE("fully correlated noise recovers deterministic top-k") {
  const std::vector<double> alpha = {1, 2, 3, 4};
  Rng rng(71);
  TheoremCheckReport rep = verify_theorem2(alpha, 2, 0.01, 1e4, 10000, rng);
  CHECK(rep.match_rate >= 0.999);
}
