#include "doctest.h"

#include "gagfl/design.hpp"
#include "gagfl/error.hpp"
#include "helpers.hpp"

#include <numeric>
#include <random>
#include <set>

using namespace gagfl;
using testing_util::make_panel;

namespace {

Vector stack(const Matrix& path) {
  Vector v(path.size());
  for (int t = 0; t < path.rows(); ++t) v.segment(t * path.cols(), path.cols()) = path.row(t).transpose();
  return v;
}

}  // namespace

TEST_CASE("moments reproduce the sum of squared residuals") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  for (Mode mode : {Mode::level, Mode::first_difference}) {
    Matrix p0 = Matrix::Random(5, 2);
    const Panel panel = make_panel({0, 0, 0, 0}, {p0}, 0.7, 9);
    const std::vector<int> members{0, 2, 3};
    const Moments m = group_moments(panel, members, mode);
    for (int rep = 0; rep < 10; ++rep) {
      Matrix path(5, 2);
      for (int t = 0; t < 5; ++t) path.row(t) << z(rng), z(rng);
      const Vector b = stack(path);
      double ssr = 0.0;
      for (int i : members) ssr += unit_ssr(panel, i, path, mode);
      CHECK(b.dot(m.gram * b) - 2.0 * b.dot(m.cross) + m.yy == doctest::Approx(ssr).epsilon(1e-10));
    }
  }
}

TEST_CASE("first-difference residual by hand") {
  Matrix y(2, 3);
  y << 1, 3, 6, 0, 1, 1;
  Matrix x(6, 1);
  x << 1, 2, 3, 1, 1, 1;
  const Panel panel(y, x);
  Matrix path(3, 1);
  path << 1, 1, 2;
  // (y2 - x2 b2) - (y1 - x1 b1) = (3 - 2) - (1 - 1) = 1
  CHECK(residual(panel, 0, 1, path, Mode::first_difference) == doctest::Approx(1.0));
  // (6 - 6) - (3 - 2) = -1
  CHECK(residual(panel, 0, 2, path, Mode::first_difference) == doctest::Approx(-1.0));
  const auto fd = first_difference(panel);
  CHECK(fd.dy(0, 0) == 2.0);
  CHECK(fd.dy(1, 1) == 0.0);
  CHECK_THROWS_AS(first_difference(Panel(Matrix::Zero(2, 2), Matrix::Zero(4, 1))), ValidationError);
}

TEST_CASE("jump layout telescopes and inverts") {
  ModelDesign design;
  const auto layout = ParamLayout::jumps(4, 2, design);
  CHECK(layout.n_params() == 8);
  CHECK(layout.blocks().size() == 4);
  Vector theta(8);
  theta << 1, 2, 0.5, 0, 0, -1, 3, 3;
  const Matrix path = layout.to_path(theta);
  CHECK(path(0, 0) == 1);
  CHECK(path(1, 0) == 1.5);
  CHECK(path(2, 1) == 1);
  CHECK(path(3, 1) == 4);
  CHECK((layout.from_path(path) - theta).norm() < 1e-12);
}

TEST_CASE("mixed coefficient kinds in the jump layout") {
  ModelDesign design;
  design.kinds = {CoefKind::fused, CoefKind::time_varying, CoefKind::time_invariant, CoefKind::homogeneous};
  const auto layout = ParamLayout::jumps(3, 4, design);
  // theta_0 (1) + varying (3) + invariant (1), then two jumps of size 1
  CHECK(layout.unpenalized_size() == 5);
  CHECK(layout.n_params() == 7);
  Vector v(7);
  v << 1, 10, 11, 12, 7, 2, -1;
  const Matrix path = layout.to_path(v);
  CHECK(path.col(0) == Vector((Vector(3) << 1, 3, 2).finished()));
  CHECK(path.col(1) == Vector((Vector(3) << 10, 11, 12).finished()));
  CHECK(path.col(2) == Vector::Constant(3, 7));
  CHECK(path.col(3) == Vector::Zero(3));
}

TEST_CASE("regime layout keeps fused coordinates constant within regimes") {
  ModelDesign design;
  const std::vector<int> dates{3};
  const auto layout = ParamLayout::regimes(4, 1, design, dates);
  Vector v(2);
  v << 5, 7;
  Matrix want(4, 1);
  want << 5, 5, 7, 7;
  CHECK(layout.to_path(v) == want);
}

TEST_CASE("masks map to coefficient kinds") {
  const auto d = ModelDesign::from_masks(Mode::level, {true, false, false}, {false, true, false}, {false, false, true});
  CHECK(d.kinds == std::vector<CoefKind>{CoefKind::fused, CoefKind::homogeneous, CoefKind::time_invariant});
  CHECK_THROWS_AS(ModelDesign::from_masks(Mode::level, {true}, {true}), ValidationError);
  CHECK_THROWS_AS(ModelDesign::from_masks(Mode::level, {true, true}, {true}), ValidationError);
  CHECK_THROWS_AS(d.validate(2), ValidationError);
  CHECK(ModelDesign{}.plain());
  CHECK_FALSE(d.plain());
}

TEST_CASE("singular systems follow the policy") {
  Matrix a(2, 2);
  a << 1, 1, 1, 1;
  Vector b(2);
  b << 2, 2;
  CHECK(is_singular(a));
  CHECK_THROWS_AS(solve_psd(a, b, SingularPolicy::error, "cell"), NumericalError);
  const Vector x = solve_psd(a, b, SingularPolicy::pseudoinverse, "cell");
  CHECK(x[0] == doctest::Approx(1.0));
  CHECK(x[1] == doctest::Approx(1.0));
  try {
    solve_psd(a, b, SingularPolicy::error, "group 2, period 3");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("group 2, period 3") != std::string::npos);
  }
}

TEST_CASE("derived seeds are deterministic and distinct") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 1000; ++s) seen.insert(derive_seed(42, s));
  CHECK(seen.size() == 1000);
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));
}

TEST_CASE("homogeneous offset and pooled update") {
  ModelDesign design;
  design.kinds = {CoefKind::fused, CoefKind::homogeneous};
  Matrix p(4, 2);
  p << 1, 0.5, 1, 0.5, 2, 0.5, 2, 0.5;
  const Panel panel = make_panel({0, 0, 0, 0, 0}, {p}, 0.0, 5);
  CoefficientPath path({p});
  Vector bh(1);
  bh << 0.5;
  const Matrix off = homogeneous_offset(panel, design, bh);
  CHECK(off(2, 3) == doctest::Approx(0.5 * panel.x(2, 3)(1)));
  path.group(0).col(1).setZero();
  const Vector est = update_homogeneous(panel, GroupAssignment::single_group(5), path, design, SingularPolicy::error);
  CHECK(est[0] == doctest::Approx(0.5).epsilon(1e-12));
  set_homogeneous(path, design, est);
  CHECK(path.group(0)(3, 1) == doctest::Approx(0.5));
}
