#include "doctest.h"

#include "gagfl/error.hpp"
#include "gagfl/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace gagfl;

TEST_CASE("DGP.1 break layout at T=12") {
  DgpSpec spec;
  spec.n_periods = 12;
  const auto bs = true_breaks(spec);
  REQUIRE(bs.n_groups() == 3);
  CHECK(bs.groups[0].dates == std::vector<int>{6, 10});
  CHECK(bs.groups[1].dates == std::vector<int>{4, 10});
  CHECK(bs.groups[2].dates.empty());
  CHECK(bs.groups[0].regimes(0, 0) == 1.0);
  CHECK(bs.groups[0].regimes(2, 0) == 3.0);
  CHECK(bs.groups[1].regimes(1, 0) == 4.0);
  CHECK(bs.groups[2].regimes(0, 0) == 1.5);
}

TEST_CASE("close layout and its collisions") {
  DgpSpec spec;
  spec.layout = BreakLayout::close_breaks;
  spec.n_periods = 12;
  const auto bs = true_breaks(spec);
  CHECK(bs.groups[0].dates == std::vector<int>{6, 8});
  CHECK(bs.groups[1].dates == std::vector<int>{4, 6});

  spec.n_periods = 4;
  try {
    true_breaks(spec);
    FAIL("expected a collision");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2 2") != std::string::npos);
    CHECK(msg.find("collide") != std::string::npos);
  }
  spec.layout = BreakLayout::standard;
  spec.n_periods = 2;
  CHECK_THROWS_AS(true_breaks(spec), ValidationError);
}

TEST_CASE("group sizes hand the remainder out in group order") {
  CHECK(group_sizes(50, {0.3, 0.3, 0.4}) == std::vector<int>{15, 15, 20});
  CHECK(group_sizes(100, {0.3, 0.3, 0.4}) == std::vector<int>{30, 30, 40});
  CHECK(group_sizes(52, {0.3, 0.3, 0.4}) == std::vector<int>{16, 16, 20});
  CHECK(group_sizes(10, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == std::vector<int>{4, 3, 3});
  for (int n = 3; n < 60; ++n) {
    int total = 0;
    for (int s : group_sizes(n, {0.2, 0.5, 0.3})) total += s;
    CHECK(total == n);
  }
}

TEST_CASE("noise-free DGP.1 is an exact linear model") {
  DgpSpec spec;
  spec.sigma = 0.0;
  spec.n_units = 20;
  spec.n_periods = 12;
  spec.seed = 3;
  const auto data = generate(spec);
  const auto& p = data.panel;
  CHECK(data.truth.assignment.sizes() == std::vector<int>{6, 6, 8});
  for (int i = 0; i < p.n_units(); ++i) {
    const auto& b = data.truth.beta_path.group(data.truth.assignment[i]);
    for (int t = 0; t < p.n_periods(); ++t) CHECK(p.y(i, t) == p.x(i, t)(0) * b(t, 0));
  }
  CHECK(expand_regimes(data.truth.breaks, 12).group(1).isApprox(data.truth.beta_path.group(1)));
}

TEST_CASE("DGP.2 errors are AR(1) with coefficient one half and variance sigma^2") {
  DgpSpec spec;
  spec.dgp = Dgp::dgp2;
  spec.n_units = 400;
  spec.n_periods = 50;
  spec.sigma = 1.0;
  spec.seed = 11;
  const auto data = generate(spec);
  const auto& p = data.panel;
  double s00 = 0.0, s01 = 0.0, s11 = 0.0, sum = 0.0;
  int n_lag = 0, n_all = 0;
  for (int i = 0; i < p.n_units(); ++i) {
    const auto& b = data.truth.beta_path.group(data.truth.assignment[i]);
    double prev = 0.0;
    for (int t = 0; t < p.n_periods(); ++t) {
      const double e = p.y(i, t) - p.x(i, t)(0) * b(t, 0);
      sum += e * e;
      ++n_all;
      if (t > 0) {
        s00 += prev * prev;
        s11 += e * e;
        s01 += prev * e;
        ++n_lag;
      }
      prev = e;
    }
  }
  const double acf = s01 / std::sqrt(s00 * s11);
  CHECK(std::abs(acf - 0.5) < 3.0 / std::sqrt(static_cast<double>(n_lag)));
  CHECK(std::abs(sum / n_all - 1.0) < 0.05);
}

TEST_CASE("DGP.3 adds the unit mean of x as a fixed effect") {
  DgpSpec spec;
  spec.dgp = Dgp::dgp3;
  spec.sigma = 0.0;
  spec.n_units = 10;
  spec.n_periods = 8;
  const auto data = generate(spec);
  const auto& p = data.panel;
  for (int i = 0; i < p.n_units(); ++i) {
    const auto& b = data.truth.beta_path.group(data.truth.assignment[i]);
    double mean_x = 0.0;
    for (int t = 0; t < p.n_periods(); ++t) mean_x += p.x(i, t)(0);
    mean_x /= p.n_periods();
    for (int t = 0; t < p.n_periods(); ++t) CHECK(p.y(i, t) - p.x(i, t)(0) * b(t, 0) == doctest::Approx(mean_x).epsilon(1e-12));
  }
}

TEST_CASE("DGP.4 carries the lagged outcome as the first regressor") {
  DgpSpec spec;
  spec.dgp = Dgp::dgp4;
  spec.n_units = 30;
  spec.n_periods = 20;
  spec.seed = 5;
  const auto data = generate(spec);
  const auto& p = data.panel;
  REQUIRE(p.n_regressors() == 2);
  CHECK(p.y_matrix().allFinite());
  CHECK(p.x_matrix().allFinite());
  CHECK(data.truth.beta_path.group(0)(0, 0) == 0.2);
  CHECK(data.truth.beta_path.group(0)(19, 1) == 3.0);
  for (int i = 0; i < p.n_units(); ++i) {
    for (int t = 1; t < p.n_periods(); ++t) CHECK(p.x(i, t)(0) == p.y(i, t - 1));
  }

  spec.sigma = 0.0;
  const auto quiet = generate(spec);
  for (int i = 0; i < quiet.panel.n_units(); ++i) {
    const auto& b = quiet.truth.beta_path.group(quiet.truth.assignment[i]);
    for (int t = 0; t < 20; ++t) {
      const auto xr = quiet.panel.x(i, t);
      CHECK(quiet.panel.y(i, t) == doctest::Approx(b(t, 0) * xr(0) + b(t, 1) * xr(1)).epsilon(1e-12));
    }
  }
}

TEST_CASE("variants shift x and shrink the jumps") {
  DgpSpec spec;
  spec.n_units = 300;
  spec.n_periods = 20;
  spec.group_dependent_x = true;
  const auto data = generate(spec);
  std::vector<double> mean(3, 0.0);
  const auto sizes = data.truth.assignment.sizes();
  for (int i = 0; i < 300; ++i) {
    for (int t = 0; t < 20; ++t) mean[static_cast<std::size_t>(data.truth.assignment[i])] += data.panel.x(i, t)(0);
  }
  for (int g = 0; g < 3; ++g) {
    const double m = mean[static_cast<std::size_t>(g)] / (sizes[static_cast<std::size_t>(g)] * 20.0);
    CHECK(std::abs(m - 0.5 * (g - 1)) < 0.1);
  }
  spec.small_breaks = true;
  const auto bs = true_breaks(spec);
  CHECK(bs.groups[0].regimes(0, 0) == doctest::Approx(1.375));
  CHECK(bs.groups[1].regimes(2, 0) == doctest::Approx(2.375));
  CHECK(bs.groups[2].regimes(0, 0) == 1.5);
}

TEST_CASE("spec validation") {
  DgpSpec spec;
  spec.shares = {0.5, 0.5};
  CHECK_THROWS_AS(generate(spec), ValidationError);
  spec.shares = {0.5, 0.4, 0.2};
  CHECK_THROWS_AS(generate(spec), ValidationError);
  spec.shares = {0.3, 0.3, 0.4};
  spec.sigma = -1.0;
  CHECK_THROWS_AS(generate(spec), ValidationError);
  spec.sigma = 0.5;
  spec.n_units = 2;
  CHECK_THROWS_AS(generate(spec), ValidationError);
}

namespace {

StudyConfig small_study(int reps) {
  StudyConfig c;
  c.spec.n_units = 30;
  c.spec.n_periods = 6;
  c.fit.gfe.n_starts = 10;
  c.lambda = 0.05;
  c.n_replications = reps;
  c.seed = 77;
  return c;
}

std::string study_csv(const StudyResult& r) {
  std::ostringstream os;
  write_study_csv(os, r);
  return os.str();
}

}  // namespace

TEST_CASE("studies are bit-reproducible across runs and thread counts") {
  StudyConfig c = small_study(1);
  const auto a = run_study(c);
  const auto b = run_study(c);
  REQUIRE(a.rows.size() == 1);
  CHECK(a.rows[0].ok);
  CHECK(a.rows[0].metrics.mf == b.rows[0].metrics.mf);
  CHECK(a.rows[0].metrics.rmse == b.rows[0].metrics.rmse);
  CHECK(a.rows[0].metrics.hd == b.rows[0].metrics.hd);
  CHECK(a.rows[0].lambda == b.rows[0].lambda);
  CHECK(study_csv(a) == study_csv(b));

  c = small_study(3);
  const auto serial = run_study(c);
  c.threads = 3;
  CHECK(study_csv(run_study(c)) == study_csv(serial));
}

TEST_CASE("study CSV layout") {
  const auto r = run_study(small_study(2));
  const std::string text = study_csv(r);
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "rep,mf,hd_g1,hd_g2,break_acc_g1,break_acc_g2,break_acc_g3,rmse,coverage,g_selected,hd_g3,lambda,m_g1,m_g2,"
        "m_g3,outer_iters,converged,status");
  int lines = 0;
  for (std::string line; std::getline(in, line);) {
    ++lines;
    CHECK(std::count(line.begin(), line.end(), ',') == 17);
  }
  CHECK(lines == 2);
}

TEST_CASE("summary aggregates by hand") {
  ReplicationRow a, b, bad;
  a.ok = b.ok = true;
  a.metrics.mf = 0.1;
  b.metrics.mf = 0.3;
  a.metrics.rmse = 1.0;
  b.metrics.rmse = 3.0;
  a.metrics.coverage = 0.9;
  b.metrics.coverage = 0.8;
  a.metrics.hd = {10.0, 0.0, 0.0};
  b.metrics.hd = {100.0, 20.0, 0.0};
  a.metrics.break_count_correct = {true, true, true};
  b.metrics.break_count_correct = {false, true, true};
  a.g_selected = 3;
  b.g_selected = 2;
  bad.error = "boom";
  const auto s = summarize({a, b, bad}, 3);
  CHECK(s.n_ok == 2);
  CHECK(s.n_failed == 1);
  CHECK(s.mean_mf == doctest::Approx(0.2));
  CHECK(s.mean_rmse == doctest::Approx(2.0));
  CHECK(s.mean_coverage == doctest::Approx(0.85));
  CHECK(s.g_correct == doctest::Approx(0.5));
  CHECK(s.break_accuracy == std::vector<double>{0.5, 1.0, 1.0});
  CHECK(s.hd_conditional[0] == doctest::Approx(10.0));
  CHECK(s.hd_unconditional[0] == doctest::Approx(55.0));
  CHECK(s.hd_conditional[1] == doctest::Approx(10.0));
}
