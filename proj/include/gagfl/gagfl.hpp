#pragma once

// Joint estimation of group memberships, group-specific breaks and regime
// coefficients: GFE initialization, then alternation between per-group AGFL
// with frozen adaptive weights and reassignment of units.

#include "gagfl/agfl.hpp"
#include "gagfl/design.hpp"
#include "gagfl/gfe.hpp"
#include "gagfl/model.hpp"

namespace gagfl {

struct GagflOptions {
  GfeOptions gfe;
  AgflOptions agfl;
  int max_outer_iters = 100;
  ModelDesign design;
  double break_tolerance = kDefaultBreakTolerance;

  void validate(const Panel& panel) const;
};

struct Preliminary {
  GfeResult gfe;
  AdaptiveWeights weights;
};

Preliminary preliminary_fit(const Panel& panel, int n_groups, const GagflOptions& opts);

// Penalized objective: SSR / (N T) + lambda * weighted jump norms of the
// fused coordinates.
double gagfl_objective(const Panel& panel, const GroupAssignment& assignment, const CoefficientPath& path,
                       const AdaptiveWeights& weights, double lambda, const ModelDesign& design = {});

FitResult fit_gagfl(const Panel& panel, int n_groups, double lambda, const GagflOptions& opts);
FitResult fit_gagfl_from(const Panel& panel, const Preliminary& prelim, double lambda, const GagflOptions& opts);

// The alternating fit from a caller-chosen initial assignment and weights; the
// initial path only serves as a warm start.
FitResult fit_gagfl_with(const Panel& panel, const GroupAssignment& initial, const CoefficientPath& warm,
                         const AdaptiveWeights& weights, double lambda, const GagflOptions& opts);

// Rejects individual-invariant regressors next to an intercept in
// first-difference mode.
void check_first_difference_regressors(const Panel& panel, const ModelDesign& design);

}  // namespace gagfl
