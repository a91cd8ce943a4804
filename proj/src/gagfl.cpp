#include "gagfl/gagfl.hpp"

#include "gagfl/error.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace gagfl {

void GagflOptions::validate(const Panel& panel) const {
  agfl.validate();
  design.validate(panel.n_regressors());
  if (max_outer_iters < 1) throw ValidationError("max_outer_iters must be positive");
  if (break_tolerance < 0.0) throw ValidationError("break tolerance must be nonnegative");
  if (design.mode == Mode::first_difference) {
    if (panel.n_periods() < 3) throw ValidationError("first differencing needs at least 3 periods");
    check_first_difference_regressors(panel, design);
  }
}

void check_first_difference_regressors(const Panel& panel, const ModelDesign& design) {
  if (design.mode != Mode::first_difference) return;
  const int k = panel.n_regressors();
  std::vector<int> invariant;
  int intercept = -1;
  for (int j = 0; j < k; ++j) {
    bool same = true;
    bool ones = true;
    for (int t = 0; t < panel.n_periods() && same; ++t) {
      const double ref = panel.x(0, t)(j);
      for (int i = 0; i < panel.n_units(); ++i) {
        const double v = panel.x(i, t)(j);
        if (v != ref) {
          same = false;
          break;
        }
        if (v != 1.0) ones = false;
      }
    }
    if (same && ones && intercept < 0) {
      intercept = j;
    } else if (same) {
      invariant.push_back(j);
    }
  }
  if (intercept >= 0 && !invariant.empty()) {
    std::ostringstream msg;
    msg << "first-difference mode with an intercept (x" << intercept + 1
        << ") cannot include individual-invariant regressors:";
    for (int j : invariant) msg << " x" << j + 1;
    throw ValidationError(msg.str());
  }
}

Preliminary preliminary_fit(const Panel& panel, int n_groups, const GagflOptions& opts) {
  opts.validate(panel);
  Preliminary p;
  p.gfe = fit_gfe(panel, n_groups, opts.gfe, opts.design);
  p.weights = compute_weights(p.gfe.path, opts.agfl.kappa, opts.agfl.weight_floor,
                              opts.design.fused_mask(panel.n_regressors()));
  return p;
}

double gagfl_objective(const Panel& panel, const GroupAssignment& assignment, const CoefficientPath& path,
                       const AdaptiveWeights& weights, double lambda, const ModelDesign& design) {
  const double nt = static_cast<double>(panel.n_units()) * panel.n_periods();
  double pen = 0.0;
  const auto fused = design.coords(CoefKind::fused, panel.n_regressors());
  for (int g = 0; g < path.n_groups(); ++g) {
    const Matrix& b = path.group(g);
    for (int s = 1; s < panel.n_periods(); ++s) {
      double sq = 0.0;
      for (int j : fused) sq += (b(s, j) - b(s - 1, j)) * (b(s, j) - b(s - 1, j));
      pen += weights.values(g, s - 1) * std::sqrt(sq);
    }
  }
  return total_ssr(panel, assignment, path, design.mode) / nt + lambda * pen;
}

namespace {

struct Step1 {
  CoefficientPath path;
  int unconverged = 0;
};

Step1 fit_groups(const Panel& panel, const GroupAssignment& assignment, const CoefficientPath& warm,
                 const AdaptiveWeights& weights, double lambda, const GagflOptions& opts) {
  const ModelDesign& design = opts.design;
  const auto members = assignment.all_members();
  const int k = panel.n_regressors();
  Step1 out;

  auto solve_all = [&](const CoefficientPath& start, const Matrix* offset) {
    std::vector<Matrix> paths;
    for (int g = 0; g < assignment.n_groups(); ++g) {
      const Vector w = weights.values.row(g).transpose();
      GroupFit fit = agfl_solve_group(panel, members[static_cast<std::size_t>(g)], w, lambda, opts.agfl,
                                      &start.group(g), design, offset);
      if (!fit.converged) ++out.unconverged;
      paths.push_back(std::move(fit.path));
    }
    return CoefficientPath(std::move(paths));
  };

  if (!design.has_homogeneous()) {
    out.path = solve_all(warm, nullptr);
    return out;
  }

  const auto hom = design.coords(CoefKind::homogeneous, k);
  Vector beta_h(static_cast<Eigen::Index>(hom.size()));
  for (std::size_t m = 0; m < hom.size(); ++m) beta_h[static_cast<Eigen::Index>(m)] = warm.group(0)(0, hom[m]);
  CoefficientPath path = warm;
  for (int iter = 0; iter < 200; ++iter) {
    const Matrix offset = homogeneous_offset(panel, design, beta_h);
    path = solve_all(path, &offset);
    set_homogeneous(path, design, beta_h);
    const Vector next = update_homogeneous(panel, assignment, path, design, opts.agfl.singular_policy);
    const double change = (next - beta_h).cwiseAbs().maxCoeff();
    beta_h = next;
    set_homogeneous(path, design, beta_h);
    if (change < opts.agfl.tol_theta) break;
  }
  out.path = std::move(path);
  return out;
}

}  // namespace

FitResult fit_gagfl_with(const Panel& panel, const GroupAssignment& initial, const CoefficientPath& warm,
                         const AdaptiveWeights& weights, double lambda, const GagflOptions& opts) {
  opts.validate(panel);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be a nonnegative finite number");
  if (initial.n_units() != panel.n_units()) throw ValidationError("assignment length differs from N");
  if (initial.has_empty_group()) throw ValidationError("initial assignment has an empty group");

  const int n_groups = initial.n_groups();
  FitResult res;
  res.lambda = lambda;
  GroupAssignment gamma = initial;
  CoefficientPath path = warm;
  std::unordered_set<std::uint64_t> seen{gamma.hash()};

  for (int s = 1; s <= opts.max_outer_iters; ++s) {
    res.n_outer_iterations = s;
    Step1 step = fit_groups(panel, gamma, path, weights, lambda, opts);
    path = std::move(step.path);
    res.agfl_unconverged += step.unconverged;

    auto labels = assign_groups(panel, path, opts.design.mode).labels();
    res.empty_group_repairs += repair_empty_groups(panel, labels, n_groups, path, opts.design.mode);
    GroupAssignment next(std::move(labels), n_groups);
    if (next == gamma) {
      res.converged = true;
      break;
    }
    if (!seen.insert(next.hash()).second) {
      res.cycle_detected = true;
      break;
    }
    gamma = std::move(next);
  }

  const int k = panel.n_regressors();
  const BreakStructure found = infer_breaks(path, opts.break_tolerance, opts.design.fused_mask(k));
  PostLassoFit refit = post_lasso(panel, gamma, found, opts.design, opts.agfl.singular_policy);

  const double nt = static_cast<double>(panel.n_units()) * panel.n_periods();
  res.assignment = std::move(gamma);
  res.penalized_objective = gagfl_objective(panel, res.assignment, path, weights, lambda, opts.design);
  res.penalized_sse = total_ssr(panel, res.assignment, path, opts.design.mode) / nt;
  res.penalized_path = std::move(path);
  res.breaks = std::move(refit.breaks);
  res.regime_std_errors = std::move(refit.regime_std_errors);
  res.post_lasso_path = std::move(refit.path);
  res.std_error_path = std::move(refit.se_path);
  res.sse = refit.ssr / nt;
  res.n_params = refit.n_params;
  return res;
}

FitResult fit_gagfl_from(const Panel& panel, const Preliminary& prelim, double lambda, const GagflOptions& opts) {
  return fit_gagfl_with(panel, prelim.gfe.assignment, prelim.gfe.path, prelim.weights, lambda, opts);
}

FitResult fit_gagfl(const Panel& panel, int n_groups, double lambda, const GagflOptions& opts) {
  return fit_gagfl_from(panel, preliminary_fit(panel, n_groups, opts), lambda, opts);
}

}  // namespace gagfl
