#pragma once

// Evaluation against a known truth: misclassification after label
// alignment, scaled Hausdorff break-date error, coefficient RMSE and
// interval coverage over every (i, t).

#include "gagfl/model.hpp"

#include <vector>

namespace gagfl {

struct Misclassification {
  double mf = 0.0;
  // perm[g_hat] = matched true label; estimated labels beyond the true
  // alphabet map to -1.
  std::vector<int> perm;
};

// Exhaustive search over label bijections (G <= 9).
Misclassification misclassification(const GroupAssignment& estimated, const GroupAssignment& truth);

struct HausdorffResult {
  double scaled = 0.0;  // 100 * HD / T
  bool one_empty = false;
};

HausdorffResult hausdorff(const std::vector<int>& estimated, const std::vector<int>& truth, int n_periods);

// beta_hat_{g_i, t} against beta_true_{g0_i, t}; one entry per coordinate
// then the pooled value.
struct RmseResult {
  std::vector<double> per_coordinate;
  double pooled = 0.0;
};

RmseResult rmse_path(const GroupAssignment& est_assignment, const CoefficientPath& est_path,
                     const GroupAssignment& true_assignment, const CoefficientPath& true_path);

// Share of (i, t, j) with |beta_hat - beta_true| <= 1.96 se. Throws on a
// nonpositive standard error.
double coverage(const GroupAssignment& est_assignment, const CoefficientPath& est_path,
                const CoefficientPath& se_path, const GroupAssignment& true_assignment,
                const CoefficientPath& true_path, int coordinate = -1);

struct MetricRow {
  double mf = 0.0;
  std::vector<double> hd;                // per true group
  std::vector<bool> hd_one_empty;
  std::vector<bool> break_count_correct;  // per true group
  double rmse = 0.0;
  std::vector<double> rmse_per_coordinate;
  double coverage = 0.0;
  bool coverage_ok = true;
};

// Per-group quantities follow the misclassification-optimal matching; a true
// group with no matched estimate counts as a wrong break count and HD 100.
MetricRow evaluate_fit(const FitResult& fit, const GroupAssignment& true_assignment,
                       const BreakStructure& true_breaks, const CoefficientPath& true_path);

}  // namespace gagfl
