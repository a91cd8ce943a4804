#include "doctest.h"

#include "gagfl/error.hpp"
#include "gagfl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

using namespace gagfl;

namespace {

GroupAssignment one_based(std::vector<int> labels, int g) { return GroupAssignment::from_one_based(labels, g); }

CoefficientPath random_path(int g, int t, int k, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  CoefficientPath p(g, t, k);
  for (int a = 0; a < g; ++a) {
    for (int s = 0; s < t; ++s) {
      for (int j = 0; j < k; ++j) p.group(a)(s, j) = z(rng);
    }
  }
  return p;
}

}  // namespace

TEST_CASE("misclassification basics") {
  const auto truth = one_based({1, 1, 2, 2, 3, 3}, 3);
  CHECK(misclassification(truth, truth).mf == 0.0);
  const auto swapped = one_based({2, 2, 1, 1, 3, 3}, 3);
  const auto m = misclassification(swapped, truth);
  CHECK(m.mf == 0.0);
  CHECK(m.perm == std::vector<int>{1, 0, 2});
}

TEST_CASE("misclassification against all 3! label permutations") {
  const auto est = one_based({1, 1, 2, 2, 3, 3}, 3);
  const auto truth = one_based({1, 1, 1, 2, 3, 3}, 3);
  std::vector<int> p{0, 1, 2};
  double best = 1.0;
  int n_perms = 0;
  do {
    ++n_perms;
    int wrong = 0;
    for (int i = 0; i < 6; ++i) wrong += p[static_cast<std::size_t>(est[i])] != truth[i];
    best = std::min(best, wrong / 6.0);
  } while (std::next_permutation(p.begin(), p.end()));
  CHECK(n_perms == 6);
  CHECK(best == doctest::Approx(1.0 / 6.0));
  CHECK(misclassification(est, truth).mf == doctest::Approx(best));
}

TEST_CASE("misclassification with more estimated groups than true ones") {
  const auto truth = one_based({1, 1, 2, 2}, 2);
  const auto est = one_based({1, 1, 2, 3}, 3);
  const auto m = misclassification(est, truth);
  CHECK(m.mf == doctest::Approx(0.25));
  CHECK(std::count(m.perm.begin(), m.perm.end(), -1) == 1);
  CHECK_THROWS_AS(misclassification(one_based({1, 1}, 1), truth), ValidationError);
}

TEST_CASE("misclassification is invariant to relabeling the estimate") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> lab(0, 2);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<int> a(20), b(20);
    for (int i = 0; i < 20; ++i) {
      a[static_cast<std::size_t>(i)] = lab(rng);
      b[static_cast<std::size_t>(i)] = lab(rng);
    }
    const GroupAssignment est(a, 3), truth(b, 3);
    std::vector<int> perm{2, 0, 1};
    CHECK(misclassification(est.relabeled(perm), truth).mf == doctest::Approx(misclassification(est, truth).mf));
  }
}

TEST_CASE("scaled Hausdorff distance") {
  CHECK(hausdorff({6, 10}, {6, 10}, 12).scaled == 0.0);
  CHECK(hausdorff({5, 10}, {6, 10}, 12).scaled == doctest::Approx(100.0 / 12.0));
  CHECK(hausdorff({5, 10}, {6, 10}, 12).scaled == doctest::Approx(8.333).epsilon(1e-3));
  const auto both = hausdorff({}, {}, 12);
  CHECK(both.scaled == 0.0);
  CHECK_FALSE(both.one_empty);
  const auto one = hausdorff({4}, {}, 12);
  CHECK(one.scaled == 100.0);
  CHECK(one.one_empty);
  CHECK(hausdorff({}, {4}, 12).one_empty);
  // one-sided distances differ: {3} to {3,9} is 0 one way, 6 the other
  CHECK(hausdorff({3}, {3, 9}, 10).scaled == doctest::Approx(60.0));
  CHECK(hausdorff({3, 9}, {3}, 10).scaled == doctest::Approx(60.0));
}

TEST_CASE("rmse examples and a double-loop reference") {
  const auto truth_a = one_based({1, 1, 2}, 2);
  CoefficientPath truth(2, 4, 1);
  truth.group(0).setConstant(1.0);
  truth.group(1).setConstant(2.0);
  CHECK(rmse_path(truth_a, truth, truth_a, truth).pooled == 0.0);
  CoefficientPath shifted = truth;
  shifted.group(0).array() += 0.1;
  shifted.group(1).array() += 0.1;
  CHECK(rmse_path(truth_a, shifted, truth_a, truth).pooled == doctest::Approx(0.1).epsilon(1e-12));

  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> lab(0, 2);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 7, t_len = 5, k = 2;
    std::vector<int> a(n), b(n);
    for (auto& v : a) v = lab(rng);
    for (auto& v : b) v = lab(rng);
    const GroupAssignment est(a, 3), tr(b, 3);
    const auto pe = random_path(3, t_len, k, rng);
    const auto pt = random_path(3, t_len, k, rng);
    double total = 0.0;
    std::vector<double> per(k, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < t_len; ++t) {
        for (int j = 0; j < k; ++j) {
          const double d = pe.group(est[i])(t, j) - pt.group(tr[i])(t, j);
          total += d * d;
          per[static_cast<std::size_t>(j)] += d * d;
        }
      }
    }
    const auto r = rmse_path(est, pe, tr, pt);
    CHECK(r.pooled == doctest::Approx(std::sqrt(total / (n * t_len * k))).epsilon(1e-12));
    for (int j = 0; j < k; ++j) {
      CHECK(r.per_coordinate[static_cast<std::size_t>(j)] ==
            doctest::Approx(std::sqrt(per[static_cast<std::size_t>(j)] / (n * t_len))).epsilon(1e-12));
    }
    std::vector<int> perm{1, 2, 0};
    CHECK(rmse_path(est.relabeled(perm), pe.relabeled(perm), tr, pt).pooled == doctest::Approx(r.pooled).epsilon(1e-12));
  }
}

TEST_CASE("coverage limits") {
  const auto a = one_based({1, 2, 2}, 2);
  CoefficientPath truth(2, 3, 1);
  truth.group(0).setConstant(1.0);
  truth.group(1).setConstant(-1.0);
  CoefficientPath est = truth;
  est.group(0).array() += 0.5;
  est.group(1).array() -= 0.25;
  CoefficientPath se(2, 3, 1);
  se.group(0).setConstant(1e300);
  se.group(1).setConstant(1e300);
  CHECK(coverage(a, est, se, a, truth) == 1.0);
  se.group(0).setConstant(1e-300);
  se.group(1).setConstant(1e-300);
  CHECK(coverage(a, est, se, a, truth) == 0.0);
  // group 1 covered, group 2 not: one unit of three
  se.group(0).setConstant(1.0);
  CHECK(coverage(a, est, se, a, truth) == doctest::Approx(1.0 / 3.0));
  std::vector<int> perm{1, 0};
  CHECK(coverage(a.relabeled(perm), est.relabeled(perm), se.relabeled(perm), a, truth) == doctest::Approx(1.0 / 3.0));
  se.group(1)(2, 0) = 0.0;
  CHECK_THROWS_AS(coverage(a, est, se, a, truth), NumericalError);
  se.group(1)(2, 0) = -1.0;
  CHECK_THROWS_AS(coverage(a, est, se, a, truth), NumericalError);
}

TEST_CASE("evaluate_fit matches groups through the best permutation") {
  BreakStructure tb;
  tb.n_periods = 12;
  tb.groups.resize(3);
  tb.groups[0].dates = {6, 10};
  tb.groups[0].regimes = Matrix::Constant(3, 1, 1.0);
  tb.groups[1].dates = {4, 10};
  tb.groups[1].regimes = Matrix::Constant(3, 1, 2.0);
  tb.groups[2].regimes = Matrix::Constant(1, 1, 3.0);
  tb.groups[0].regimes(1, 0) = 5.0;
  tb.groups[1].regimes(2, 0) = 7.0;
  const auto true_path = expand_regimes(tb, 12);
  const auto truth = one_based({1, 1, 2, 2, 3, 3}, 3);

  // estimated labels rotated; estimated group for truth 1 misses a break
  FitResult fit;
  std::vector<int> perm{2, 0, 1};
  fit.assignment = truth.relabeled(perm);
  fit.breaks.n_periods = 12;
  fit.breaks.groups.resize(3);
  fit.breaks.groups[2] = tb.groups[0];
  fit.breaks.groups[2].dates = {5};
  fit.breaks.groups[2].regimes = Matrix::Constant(2, 1, 1.0);
  fit.breaks.groups[0] = tb.groups[1];
  fit.breaks.groups[1] = tb.groups[2];
  fit.post_lasso_path = true_path.relabeled(perm);
  fit.std_error_path = CoefficientPath(3, 12, 1);
  for (int g = 0; g < 3; ++g) fit.std_error_path.group(g).setConstant(0.1);

  const auto row = evaluate_fit(fit, truth, tb, true_path);
  CHECK(row.mf == 0.0);
  CHECK(row.break_count_correct == std::vector<bool>{false, true, true});
  CHECK(row.hd[0] == doctest::Approx(100.0 * 5 / 12));
  CHECK(row.hd[1] == 0.0);
  CHECK(row.hd[2] == 0.0);
  CHECK(row.rmse == 0.0);
  CHECK(row.coverage == 1.0);
  CHECK(row.coverage_ok);

  fit.std_error_path.group(0)(0, 0) = 0.0;
  const auto flagged = evaluate_fit(fit, truth, tb, true_path);
  CHECK_FALSE(flagged.coverage_ok);
  CHECK(std::isnan(flagged.coverage));
}

TEST_CASE("a true group without a matched estimate counts as missed") {
  BreakStructure tb;
  tb.n_periods = 4;
  tb.groups.resize(2);
  tb.groups[0].regimes = Matrix::Constant(1, 1, 1.0);
  tb.groups[1].dates = {3};
  tb.groups[1].regimes = Matrix::Constant(2, 1, 2.0);
  const auto true_path = expand_regimes(tb, 4);
  const auto truth = one_based({1, 1, 2, 2}, 2);
  FitResult fit;
  fit.assignment = GroupAssignment::single_group(4);
  fit.breaks.n_periods = 4;
  fit.breaks.groups.resize(1);
  fit.breaks.groups[0].regimes = Matrix::Constant(1, 1, 1.5);
  fit.post_lasso_path = expand_regimes(fit.breaks, 4);
  fit.std_error_path = CoefficientPath(1, 4, 1);
  fit.std_error_path.group(0).setConstant(1.0);
  const auto row = evaluate_fit(fit, truth, tb, true_path);
  CHECK(row.mf == doctest::Approx(0.5));
  CHECK(std::count(row.hd.begin(), row.hd.end(), 100.0) == 1);
  CHECK(std::count(row.break_count_correct.begin(), row.break_count_correct.end(), false) >= 1);
}
