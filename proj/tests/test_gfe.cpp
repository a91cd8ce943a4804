#include "doctest.h"

#include "gagfl/error.hpp"
#include "gagfl/gfe.hpp"
#include "helpers.hpp"

#include <algorithm>
#include <limits>
#include <random>

using namespace gagfl;
using testing_util::brute_ssr;
using testing_util::make_panel;
using testing_util::step_path;

TEST_CASE("ols_per_cell is the cell mean under a unit regressor") {
  Matrix y(2, 2);
  y << 2, 0, 4, 1;
  const Panel p(y, Matrix::Ones(4, 1));
  const auto path = ols_per_cell(p, GroupAssignment::single_group(2));
  CHECK(path.group(0)(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("ols_per_cell matches a hand-solved 2x2 system") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z;
  Matrix y(3, 2);
  Matrix x(6, 2);
  for (int r = 0; r < 6; ++r) {
    y(r / 2, r % 2) = z(rng);
    x(r, 0) = z(rng);
    x(r, 1) = z(rng);
  }
  const Panel p(y, x);
  double a = 0, b = 0, d = 0, c0 = 0, c1 = 0;
  for (int i = 0; i < 3; ++i) {
    const auto xi = x.row(2 * i);
    a += xi(0) * xi(0);
    b += xi(0) * xi(1);
    d += xi(1) * xi(1);
    c0 += xi(0) * y(i, 0);
    c1 += xi(1) * y(i, 0);
  }
  const double det = a * d - b * b;
  const auto path = ols_per_cell(p, GroupAssignment::single_group(3));
  CHECK(path.group(0)(0, 0) == doctest::Approx((d * c0 - b * c1) / det).epsilon(1e-12));
  CHECK(path.group(0)(0, 1) == doctest::Approx((a * c1 - b * c0) / det).epsilon(1e-12));
}

TEST_CASE("ols_per_cell recovers noise-free paths") {
  const Matrix b0 = step_path(6, {3}, {1.0, -2.0});
  const Matrix b1 = step_path(6, {5}, {0.5, 4.0});
  const std::vector<int> labels{0, 1, 0, 1, 0, 1};
  const Panel p = make_panel(labels, {b0, b1}, 0.0, 1);
  const auto path = ols_per_cell(p, GroupAssignment(labels, 2));
  CHECK((path.group(0) - b0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((path.group(1) - b1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("singular cell reports group, period and size") {
  const Panel p(Matrix::Ones(2, 2), Matrix::Ones(4, 2));
  try {
    ols_per_cell(p, GroupAssignment::single_group(2));
    FAIL("expected a NumericalError");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("group 1") != std::string::npos);
    CHECK(msg.find("period 1") != std::string::npos);
    CHECK(msg.find("size 2") != std::string::npos);
  }
  const auto path = ols_per_cell(p, GroupAssignment::single_group(2), SingularPolicy::pseudoinverse);
  CHECK(path.group(0)(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("assign_groups picks the dominant fit and breaks ties low") {
  const Matrix good = step_path(4, {}, {1.0});
  const Matrix bad = step_path(4, {}, {-9.0});
  const Panel p = make_panel({0, 0}, {good}, 0.0, 4);
  CHECK(assign_groups(p, CoefficientPath({bad, good})).labels() == std::vector<int>{1, 1});
  CHECK(assign_groups(p, CoefficientPath({good, good})).labels() == std::vector<int>{0, 0});
}

TEST_CASE("assign_groups matches a per-unit brute-force argmin") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  const Panel p = make_panel({0, 0, 1, 1, 0, 1}, {Matrix::Random(4, 1), Matrix::Random(4, 1)}, 0.5, 8);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Matrix> paths;
    for (int g = 0; g < 2; ++g) {
      Matrix m(4, 1);
      for (int t = 0; t < 4; ++t) m(t, 0) = z(rng);
      paths.push_back(m);
    }
    const auto got = assign_groups(p, CoefficientPath(paths));
    for (int i = 0; i < 6; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int arg = -1;
      for (int g = 0; g < 2; ++g) {
        double s = 0.0;
        for (int t = 0; t < 4; ++t) {
          const double r = p.y(i, t) - p.x(i, t)(0) * paths[static_cast<std::size_t>(g)](t, 0);
          s += r * r;
        }
        if (s < best) {
          best = s;
          arg = g;
        }
      }
      CHECK(got[i] == arg);
    }
  }
}

TEST_CASE("random assignments are non-empty and seed-determined") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto a = random_assignment(5, 4, s);
    CHECK_FALSE(a.has_empty_group());
    CHECK(a == random_assignment(5, 4, s));
  }
  CHECK_THROWS_AS(random_assignment(2, 3, 0), ValidationError);
}

TEST_CASE("G=1 is pooled per-period OLS regardless of seed") {
  const Panel p = make_panel({0, 0, 0, 0, 0}, {Matrix::Random(5, 2)}, 0.3, 12);
  GfeOptions o1, o2;
  o1.seed = 1;
  o2.seed = 999;
  const auto a = fit_gfe(p, 1, o1);
  const auto b = fit_gfe(p, 1, o2);
  const auto ols = ols_per_cell(p, GroupAssignment::single_group(5));
  CHECK(a.path.group(0) == b.path.group(0));
  CHECK((a.path.group(0) - ols.group(0)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(a.assignment.labels() == std::vector<int>(5, 0));
}

TEST_CASE("noise-free three-group panel is separated exactly") {
  const std::vector<Matrix> paths{step_path(12, {6, 10}, {1, 2, 3}), step_path(12, {4, 10}, {3, 4, 5}),
                                  step_path(12, {}, {1.5})};
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) labels.push_back(i % 3);
  const Panel p = make_panel(labels, paths, 0.0, 21);
  GfeOptions opts;
  opts.seed = 3;
  const auto fit = fit_gfe(p, 3, opts);
  CHECK(fit.ssr < 1e-20);
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 12; ++j) CHECK((fit.assignment[i] == fit.assignment[j]) == (labels[i] == labels[j]));
  }
}

// 2000 starts over 254 non-empty assignments make the multi-start search
// effectively exhaustive.
TEST_CASE("fit_gfe attains the exhaustive global minimum at tiny scale") {
  for (unsigned seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::vector<int> labels;
    for (int i = 0; i < 8; ++i) labels.push_back(static_cast<int>(rng() % 2));
    Matrix a(3, 1), b(3, 1);
    for (int t = 0; t < 3; ++t) {
      a(t, 0) = z(rng);
      b(t, 0) = z(rng);
    }
    const Panel p = make_panel(labels, {a, b}, 0.5, seed + 100);
    double best = std::numeric_limits<double>::infinity();
    for (int mask = 0; mask < 256; ++mask) {
      std::vector<int> l(8);
      for (int i = 0; i < 8; ++i) l[static_cast<std::size_t>(i)] = (mask >> i) & 1;
      best = std::min(best, brute_ssr(p, l, 2));
    }
    GfeOptions opts;
    opts.seed = seed;
    opts.n_starts = 2000;
    const auto fit = fit_gfe(p, 2, opts);
    CHECK(fit.ssr == doctest::Approx(best).epsilon(1e-10));
    CHECK(brute_ssr(p, fit.assignment.labels(), 2) == doctest::Approx(fit.ssr).epsilon(1e-10));
  }
}

TEST_CASE("within a start the SSR never increases") {
  std::vector<int> labels;
  for (int i = 0; i < 30; ++i) labels.push_back(i % 3);
  const Panel p = make_panel(labels, {Matrix::Random(6, 2), Matrix::Random(6, 2), Matrix::Random(6, 2)}, 1.0, 2);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto r = run_gfe_start(p, random_assignment(30, 3, s), GfeOptions{});
    for (std::size_t j = 1; j < r.ssr_trace.size(); ++j) CHECK(r.ssr_trace[j] <= r.ssr_trace[j - 1] * (1 + 1e-12));
    CHECK_FALSE(r.assignment.has_empty_group());
  }
}

TEST_CASE("relabeled initializer permutes the output and keeps the SSR") {
  std::vector<int> labels;
  for (int i = 0; i < 15; ++i) labels.push_back(i % 3);
  const Panel p = make_panel(labels, {Matrix::Random(5, 1), Matrix::Random(5, 1), Matrix::Random(5, 1)}, 0.8, 6);
  const auto init = random_assignment(15, 3, 77);
  const std::vector<int> perm{2, 0, 1};
  const auto a = run_gfe_start(p, init, GfeOptions{});
  const auto b = run_gfe_start(p, init.relabeled(perm), GfeOptions{});
  CHECK(b.assignment == a.assignment.relabeled(perm));
  CHECK(b.ssr == doctest::Approx(a.ssr).epsilon(1e-12));
  for (int g = 0; g < 3; ++g) CHECK((b.path.group(perm[static_cast<std::size_t>(g)]) - a.path.group(g)).norm() < 1e-12);
}

TEST_CASE("scaling y scales SSR and paths and keeps assignments") {
  std::vector<int> labels;
  for (int i = 0; i < 20; ++i) labels.push_back(i % 2);
  const Panel p = make_panel(labels, {Matrix::Random(5, 1), Matrix::Random(5, 1)}, 0.5, 31);
  GfeOptions opts;
  opts.seed = 4;
  const auto a = fit_gfe(p, 2, opts);
  const auto b = fit_gfe(p.scaled_outcome(3.0), 2, opts);
  CHECK(a.assignment == b.assignment);
  CHECK(b.ssr == doctest::Approx(9.0 * a.ssr).epsilon(1e-10));
  CHECK((b.path.group(0) - 3.0 * a.path.group(0)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("fit_gfe is identical across thread counts") {
  std::vector<int> labels;
  for (int i = 0; i < 24; ++i) labels.push_back(i % 3);
  const Panel p = make_panel(labels, {Matrix::Random(6, 1), Matrix::Random(6, 1), Matrix::Random(6, 1)}, 1.0, 8);
  GfeOptions o1, o4;
  o1.seed = o4.seed = 10;
  o1.n_starts = o4.n_starts = 30;
  o4.threads = 4;
  const auto a = fit_gfe(p, 3, o1);
  const auto b = fit_gfe(p, 3, o4);
  CHECK(a.assignment == b.assignment);
  CHECK(a.ssr == b.ssr);
  CHECK(a.best_start == b.best_start);
}
