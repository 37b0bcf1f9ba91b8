#include <cmath>
#include <vector>

#include "copsel/errors.hpp"
#include "copsel/evaluation.hpp"
#include "doctest.h"

using namespace copsel;

namespace {

Tensor mask_rows(const std::vector<std::vector<double>>& rows) {
  Tensor t(Shape{rows.size(), rows.empty() ? 0 : rows[0].size()});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < rows[r].size(); ++i) t.at(r, i) = rows[r][i];
  }
  return t;
}

}  // namespace

TEST_CASE("tpr and fdr") {
  const std::vector<FeatureSet> truth = {{0, 1}};
  auto exact = tpr_fdr(mask_rows({{1, 1, 0, 0}}), truth);
  CHECK(exact.tpr == 100.0);
  CHECK(exact.fdr == 0.0);
  auto extra = tpr_fdr(mask_rows({{1, 1, 1, 0}}), truth);
  CHECK(extra.tpr == 100.0);
  CHECK(extra.fdr == doctest::Approx(100.0 / 3.0));
  auto empty = tpr_fdr(mask_rows({{0, 0, 0, 0}}), truth);
  CHECK(empty.tpr == 0.0);
  CHECK(empty.fdr == 0.0);
  CHECK(empty.mean_selected == 0.0);

  // Macro average over samples with different truth sizes.
  auto mixed = tpr_fdr(mask_rows({{1, 0, 0, 0}, {1, 1, 1, 1}}), {{0, 1}, {0, 1, 2, 3}});
  CHECK(mixed.tpr == doctest::Approx(75.0));
  CHECK(mixed.fdr == 0.0);
  CHECK(mixed.mean_selected == 2.5);
  CHECK(mixed.n_samples == 2);

  CHECK_THROWS_AS(tpr_fdr(mask_rows({{1, 0}}), {{0}, {1}}), ShapeError);
}

TEST_CASE("tpr and fdr are invariant to relabeling features") {
  const Tensor masks = mask_rows({{1, 0, 1, 1, 0}, {0, 1, 1, 0, 0}, {1, 1, 1, 1, 1}});
  const std::vector<FeatureSet> truth = {{0, 2}, {1, 4}, {3}};
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  Tensor permuted(masks.shape());
  std::vector<FeatureSet> permuted_truth;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t i = 0; i < 5; ++i) permuted.at(r, perm[i]) = masks.at(r, i);
    FeatureSet s;
    for (std::size_t i : truth[r]) s.push_back(perm[i]);
    permuted_truth.push_back(s);
  }
  auto a = tpr_fdr(masks, truth);
  auto b = tpr_fdr(permuted, permuted_truth);
  CHECK(a.tpr == b.tpr);
  CHECK(a.fdr == b.fdr);
  CHECK(a.tpr >= 0.0);
  CHECK(a.tpr <= 100.0);
  CHECK(a.fdr >= 0.0);
  CHECK(a.fdr <= 100.0);
}

TEST_CASE("accuracy") {
  const std::vector<int> labels = {0, 1, 1, 0, 1, 0, 0, 1, 1, 0};
  Tensor onehot(Shape{10, 2});
  for (std::size_t r = 0; r < 10; ++r) onehot.at(r, labels[r]) = 1.0;
  CHECK(accuracy(onehot, labels) == 100.0);
  Tensor one_wrong = onehot;
  one_wrong.at(3, 0) = 0.0;
  one_wrong.at(3, 1) = 1.0;
  CHECK(accuracy(one_wrong, labels) == 90.0);
  // Uniform rows resolve to class 0, so accuracy is the class-0 rate.
  CHECK(accuracy(Tensor(Shape{10, 2}, 0.5), labels) == 50.0);
  CHECK_THROWS_AS(accuracy(onehot, std::vector<int>{0, 1}), ShapeError);
}

TEST_CASE("theorem 1 verifier") {
  Rng rng(3);
  const std::vector<double> alpha = {1, 2, 3, 4};
  SUBCASE("k = d has a single outcome") {
    auto rep = verify_theorem1(alpha, 4, 0.01, 2000, rng);
    CHECK(rep.tv_distance == 0.0);
  }
  SUBCASE("equal weights, k = 1") {
    const std::vector<double> even = {2, 2, 2, 2, 2};
    auto rep = verify_theorem1(even, 1, 0.01, 100000, rng);
    CHECK(rep.tv_distance <= 0.02);
  }
  SUBCASE("TV does not grow as t drops") {
    Rng r1(5), r2(5);
    auto warm = verify_theorem1(alpha, 2, 0.1, 100000, r1);
    auto cold = verify_theorem1(alpha, 2, 0.01, 100000, r2);
    CHECK(cold.tv_distance <= warm.tv_distance + 0.01);
    CHECK(cold.tv_distance <= 0.02);
    CHECK(cold.tv_distance >= 0.0);
    CHECK(cold.tv_distance <= 1.0);
  }
  SUBCASE("oracle limit") {
    const std::vector<double> big(9, 1.0);
    CHECK_THROWS_AS(verify_theorem1(big, 2, 0.01, 10, rng), DomainError);
  }
}

TEST_CASE("theorem 2 verifier") {
  const std::vector<double> alpha = {1, 2, 3, 4};
  Rng rng(9);
  auto strong = verify_theorem2(alpha, 2, 0.01, 1e4, 10000, rng);
  CHECK(strong.match_rate >= 0.999);
  CHECK(strong.tau == 1e4);
  auto independent = verify_theorem2(alpha, 2, 0.01, 0.0, 10000, rng);
  CHECK(independent.match_rate < 1.0);
  CHECK(independent.match_rate > 0.0);
  const std::vector<double> dominant = {1, 1, 1e6, 1};
  CHECK(verify_theorem2(dominant, 1, 0.01, 0.0, 10000, rng).match_rate >= 0.999);
}

TEST_CASE("copula check with independent coordinates") {
  Rng rng(13);
  auto rep = copula_marginal_check(Tensor(Shape{4, 1}, 0.0), 1.0, 0.0,
                                   CovarianceForm::kFactorPlusNoise, 100000, rng);
  for (double p : rep.ks_pvalue) CHECK(p >= 0.01);
  CHECK(rep.max_correlation_error <= 0.02);

  Rng one(14);
  auto single = copula_marginal_check(Tensor(Shape{1, 1}, 0.0), 1.0, 0.0,
                                      CovarianceForm::kFactorPlusNoise, 100000, one);
  REQUIRE(single.ks_statistic.size() == 1);
  CHECK(single.ks_statistic[0] < 1.628 / std::sqrt(1e5));
}

TEST_CASE("ks helpers") {
  CHECK(ks_statistic_uniform({0.5}) == 0.5);
  CHECK(ks_statistic_uniform({0.125, 0.375, 0.625, 0.875}) == 0.125);
  CHECK(ks_pvalue(0.0, 100) == 1.0);
  CHECK(ks_pvalue(1.0, 100) < 1e-12);
  // Kolmogorov survival at lambda = 1.36 is 0.0495 (standard 5% critical value).
  const double n = 1e6;
  CHECK(ks_pvalue(1.36 / (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)), 1000000) ==
        doctest::Approx(0.0495).epsilon(0.01));
  std::map<std::uint32_t, double> p = {{1, 0.5}, {2, 0.5}}, q = {{1, 1.0}};
  CHECK(total_variation(p, q) == 0.5);
  CHECK(total_variation(p, p) == 0.0);
}
