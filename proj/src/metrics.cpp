#include "gagfl/metrics.hpp"

#include "gagfl/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>

namespace gagfl {

Misclassification misclassification(const GroupAssignment& estimated, const GroupAssignment& truth) {
  if (estimated.n_units() != truth.n_units()) throw ValidationError("assignments have different lengths");
  const int ge = estimated.n_groups();
  const int gt = truth.n_groups();
  const int width = std::max(ge, gt);
  if (width > 9) throw ValidationError("label alignment supports at most 9 groups");

  // counts(a, b): units with estimate a and truth b
  std::vector<int> counts(static_cast<std::size_t>(width * width), 0);
  for (int i = 0; i < truth.n_units(); ++i) ++counts[static_cast<std::size_t>(estimated[i] * width + truth[i])];

  std::vector<int> perm(static_cast<std::size_t>(width));
  std::iota(perm.begin(), perm.end(), 0);
  int best_hits = -1;
  std::vector<int> best;
  do {
    int hits = 0;
    for (int a = 0; a < width; ++a) hits += counts[static_cast<std::size_t>(a * width + perm[static_cast<std::size_t>(a)])];
    if (hits > best_hits) {
      best_hits = hits;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  Misclassification out;
  out.mf = 1.0 - static_cast<double>(best_hits) / truth.n_units();
  out.perm.assign(best.begin(), best.begin() + ge);
  for (int& p : out.perm) {
    if (p >= gt) p = -1;
  }
  return out;
}

HausdorffResult hausdorff(const std::vector<int>& estimated, const std::vector<int>& truth, int n_periods) {
  HausdorffResult out;
  if (estimated.empty() && truth.empty()) return out;
  if (estimated.empty() || truth.empty()) {
    out.scaled = 100.0;
    out.one_empty = true;
    return out;
  }
  auto directed = [](const std::vector<int>& from, const std::vector<int>& to) {
    int worst = 0;
    for (int b : to) {
      int near = std::numeric_limits<int>::max();
      for (int a : from) near = std::min(near, std::abs(a - b));
      worst = std::max(worst, near);
    }
    return worst;
  };
  const int hd = std::max(directed(estimated, truth), directed(truth, estimated));
  out.scaled = 100.0 * hd / n_periods;
  return out;
}

namespace {

void check_shapes(const GroupAssignment& est_assignment, const CoefficientPath& est_path,
                  const GroupAssignment& true_assignment, const CoefficientPath& true_path) {
  if (est_assignment.n_units() != true_assignment.n_units()) throw ValidationError("assignments have different lengths");
  if (est_path.n_periods() != true_path.n_periods() || est_path.n_regressors() != true_path.n_regressors()) {
    throw ValidationError("coefficient paths have different shapes");
  }
}

}  // namespace

RmseResult rmse_path(const GroupAssignment& est_assignment, const CoefficientPath& est_path,
                     const GroupAssignment& true_assignment, const CoefficientPath& true_path) {
  check_shapes(est_assignment, est_path, true_assignment, true_path);
  const int k = true_path.n_regressors();
  const int t_len = true_path.n_periods();
  Vector sq = Vector::Zero(k);
  for (int i = 0; i < true_assignment.n_units(); ++i) {
    const Matrix diff = est_path.group(est_assignment[i]) - true_path.group(true_assignment[i]);
    sq += diff.array().square().colwise().sum().matrix().transpose();
  }
  const double cells = static_cast<double>(true_assignment.n_units()) * t_len;
  RmseResult out;
  for (int j = 0; j < k; ++j) out.per_coordinate.push_back(std::sqrt(sq[j] / cells));
  out.pooled = std::sqrt(sq.sum() / (cells * k));
  return out;
}

double coverage(const GroupAssignment& est_assignment, const CoefficientPath& est_path, const CoefficientPath& se_path,
                const GroupAssignment& true_assignment, const CoefficientPath& true_path, int coordinate) {
  check_shapes(est_assignment, est_path, true_assignment, true_path);
  const int k = true_path.n_regressors();
  const int t_len = true_path.n_periods();
  long hits = 0;
  long total = 0;
  for (int i = 0; i < true_assignment.n_units(); ++i) {
    const Matrix& b = est_path.group(est_assignment[i]);
    const Matrix& s = se_path.group(est_assignment[i]);
    const Matrix& b0 = true_path.group(true_assignment[i]);
    for (int t = 0; t < t_len; ++t) {
      for (int j = 0; j < k; ++j) {
        if (coordinate >= 0 && j != coordinate) continue;
        if (!(s(t, j) > 0.0)) throw NumericalError("nonpositive standard error in coverage computation");
        if (std::abs(b(t, j) - b0(t, j)) <= 1.96 * s(t, j)) ++hits;
        ++total;
      }
    }
  }
  return total ? static_cast<double>(hits) / total : 0.0;
}

MetricRow evaluate_fit(const FitResult& fit, const GroupAssignment& true_assignment, const BreakStructure& true_breaks,
                       const CoefficientPath& true_path) {
  MetricRow row;
  const auto mc = misclassification(fit.assignment, true_assignment);
  row.mf = mc.mf;
  const int gt = true_assignment.n_groups();
  std::vector<int> matched(static_cast<std::size_t>(gt), -1);
  for (std::size_t a = 0; a < mc.perm.size(); ++a) {
    if (mc.perm[a] >= 0) matched[static_cast<std::size_t>(mc.perm[a])] = static_cast<int>(a);
  }
  const int t_len = true_breaks.n_periods;
  for (int g = 0; g < gt; ++g) {
    const auto& truth = true_breaks.groups[static_cast<std::size_t>(g)].dates;
    const int a = matched[static_cast<std::size_t>(g)];
    if (a < 0) {
      row.hd.push_back(100.0);
      row.hd_one_empty.push_back(true);
      row.break_count_correct.push_back(false);
      continue;
    }
    const auto& est = fit.breaks.groups[static_cast<std::size_t>(a)].dates;
    const auto h = hausdorff(est, truth, t_len);
    row.hd.push_back(h.scaled);
    row.hd_one_empty.push_back(h.one_empty);
    row.break_count_correct.push_back(est.size() == truth.size());
  }
  const auto r = rmse_path(fit.assignment, fit.post_lasso_path, true_assignment, true_path);
  row.rmse = r.pooled;
  row.rmse_per_coordinate = r.per_coordinate;
  try {
    row.coverage = coverage(fit.assignment, fit.post_lasso_path, fit.std_error_path, true_assignment, true_path);
  } catch (const NumericalError&) {
    row.coverage = std::numeric_limits<double>::quiet_NaN();
    row.coverage_ok = false;
  }
  return row;
}

}  // namespace gagfl
