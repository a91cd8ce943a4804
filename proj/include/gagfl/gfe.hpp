#pragma once

// Preliminary grouped fixed-effects estimator: K-means style alternation
// between per-(group, period) least squares and unit reassignment, restarted
// from many random assignments.

#include "gagfl/design.hpp"
#include "gagfl/model.hpp"

#include <cstdint>
#include <vector>

namespace gagfl {

struct GfeOptions {
  int n_starts = 100;
  int max_iters = 100;
  std::uint64_t seed = 0;
  SingularPolicy singular_policy = SingularPolicy::error;
  int threads = 1;
};

// beta_{g,t} = (sum_{i in g} x_it x_it')^{-1} sum_{i in g} x_it y_it.
CoefficientPath ols_per_cell(const Panel& panel, const GroupAssignment& assignment,
                             SingularPolicy policy = SingularPolicy::error);

// Unpenalized least-squares paths for a given assignment under any design
// (first differences, coefficient kinds). Reduces to ols_per_cell for the
// plain level model.
CoefficientPath fit_paths_unpenalized(const Panel& panel, const GroupAssignment& assignment,
                                      const ModelDesign& design,
                                      SingularPolicy policy = SingularPolicy::error);

// Each unit goes to the group with the smallest time-summed squared
// residual; ties go to the lowest group index.
GroupAssignment assign_groups(const Panel& panel, const CoefficientPath& path, Mode mode = Mode::level);

// Fills each empty group with the unit of largest individual SSR (taken from
// groups with more than one member). Returns the number of moves.
int repair_empty_groups(const Panel& panel, std::vector<int>& labels, int n_groups,
                        const CoefficientPath& path, Mode mode);

// Uniform draw from {0..G-1}^N conditioned on every group being non-empty.
GroupAssignment random_assignment(int n_units, int n_groups, std::uint64_t seed);

struct GfeStartResult {
  CoefficientPath path;
  GroupAssignment assignment;
  double ssr = 0.0;
  int iterations = 0;
  bool converged = false;
  int repairs = 0;
  std::vector<double> ssr_trace;  // SSR after every refit
};

GfeStartResult run_gfe_start(const Panel& panel, GroupAssignment initial, const GfeOptions& opts,
                             const ModelDesign& design = {});

struct GfeResult {
  CoefficientPath path;
  GroupAssignment assignment;
  double ssr = 0.0;  // unnormalized sum of squared residuals
  int best_start = 0;
  int failed_starts = 0;
};

GfeResult fit_gfe(const Panel& panel, int n_groups, const GfeOptions& opts, const ModelDesign& design = {});

}  // namespace gagfl
