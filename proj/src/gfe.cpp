#include "gagfl/gfe.hpp"

#include "gagfl/error.hpp"
#include "gagfl/parallel.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

namespace gagfl {

CoefficientPath ols_per_cell(const Panel& panel, const GroupAssignment& assignment, SingularPolicy policy) {
  const int n_groups = assignment.n_groups();
  const int t_len = panel.n_periods();
  const int k = panel.n_regressors();
  std::vector<Matrix> gram(static_cast<std::size_t>(n_groups * t_len), Matrix::Zero(k, k));
  std::vector<Vector> cross(static_cast<std::size_t>(n_groups * t_len), Vector::Zero(k));
  for (int i = 0; i < panel.n_units(); ++i) {
    const int g = assignment[i];
    for (int t = 0; t < t_len; ++t) {
      const auto cell = static_cast<std::size_t>(g * t_len + t);
      const auto x = panel.x(i, t);
      gram[cell].noalias() += x.transpose() * x;
      cross[cell] += panel.y(i, t) * x.transpose();
    }
  }
  const auto sizes = assignment.sizes();
  CoefficientPath path(n_groups, t_len, k);
  for (int g = 0; g < n_groups; ++g) {
    for (int t = 0; t < t_len; ++t) {
      const auto cell = static_cast<std::size_t>(g * t_len + t);
      std::ostringstream ctx;
      ctx << "group " << g + 1 << ", period " << t + 1 << " (group size " << sizes[static_cast<std::size_t>(g)]
          << ", k = " << k << ")";
      if (k == 1) {
        const double a = gram[cell](0, 0);
        if (a > 0.0) {
          path.group(g)(t, 0) = cross[cell][0] / a;
          continue;
        }
      }
      path.group(g).row(t) = solve_psd(gram[cell], cross[cell], policy, ctx.str()).transpose();
    }
  }
  return path;
}

namespace {

CoefficientPath fit_paths_given_offset(const Panel& panel, const std::vector<std::vector<int>>& members,
                                       const ModelDesign& design, const ParamLayout& layout,
                                       const Matrix* offset, SingularPolicy policy) {
  const double scale = 1.0;
  std::vector<Matrix> paths;
  for (std::size_t g = 0; g < members.size(); ++g) {
    if (members[g].empty()) {
      std::ostringstream msg;
      msg << "group " << g + 1 << " is empty";
      throw NumericalError(msg.str());
    }
    const Moments mom = group_moments(panel, members[g], design.mode, offset);
    const QuadraticLoss loss = project(mom, layout, scale);
    std::ostringstream ctx;
    ctx << "group " << g + 1 << " (group size " << members[g].size() << ")";
    const Vector v = solve_psd(loss.hessian, loss.linear, policy, ctx.str());
    paths.push_back(layout.to_path(v));
  }
  return CoefficientPath(std::move(paths));
}

}  // namespace

CoefficientPath fit_paths_unpenalized(const Panel& panel, const GroupAssignment& assignment,
                                      const ModelDesign& design, SingularPolicy policy) {
  if (design.plain()) return ols_per_cell(panel, assignment, policy);

  const int k = panel.n_regressors();
  const auto layout = ParamLayout::free_path(panel.n_periods(), k, design);
  const auto members = assignment.all_members();
  if (!design.has_homogeneous()) {
    return fit_paths_given_offset(panel, members, design, layout, nullptr, policy);
  }

  Vector beta_h = Vector::Zero(static_cast<Eigen::Index>(design.coords(CoefKind::homogeneous, k).size()));
  CoefficientPath path;
  for (int iter = 0; iter < 1000; ++iter) {
    const Matrix offset = homogeneous_offset(panel, design, beta_h);
    path = fit_paths_given_offset(panel, members, design, layout, &offset, policy);
    const Vector next = update_homogeneous(panel, assignment, path, design, policy);
    const double change = (next - beta_h).norm();
    beta_h = next;
    if (change <= 1e-13 * (1.0 + beta_h.norm())) break;
  }
  const Matrix offset = homogeneous_offset(panel, design, beta_h);
  path = fit_paths_given_offset(panel, members, design, layout, &offset, policy);
  set_homogeneous(path, design, beta_h);
  return path;
}

GroupAssignment assign_groups(const Panel& panel, const CoefficientPath& path, Mode mode) {
  const int n_groups = path.n_groups();
  std::vector<int> labels(static_cast<std::size_t>(panel.n_units()));
  for (int i = 0; i < panel.n_units(); ++i) {
    int best = 0;
    double best_ssr = std::numeric_limits<double>::infinity();
    for (int g = 0; g < n_groups; ++g) {
      const double s = unit_ssr(panel, i, path.group(g), mode);
      if (s < best_ssr) {
        best_ssr = s;
        best = g;
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
  }
  return GroupAssignment(std::move(labels), n_groups);
}

int repair_empty_groups(const Panel& panel, std::vector<int>& labels, int n_groups, const CoefficientPath& path,
                        Mode mode) {
  int moves = 0;
  for (int g = 0; g < n_groups; ++g) {
    std::vector<int> sizes(static_cast<std::size_t>(n_groups), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    if (sizes[static_cast<std::size_t>(g)] > 0) continue;
    int worst = -1;
    double worst_ssr = -1.0;
    for (int i = 0; i < panel.n_units(); ++i) {
      const int own = labels[static_cast<std::size_t>(i)];
      if (sizes[static_cast<std::size_t>(own)] < 2) continue;
      const double s = unit_ssr(panel, i, path.group(own), mode);
      if (s > worst_ssr) {
        worst_ssr = s;
        worst = i;
      }
    }
    if (worst < 0) throw NumericalError("cannot repair empty group: too few units");
    labels[static_cast<std::size_t>(worst)] = g;
    ++moves;
  }
  return moves;
}

GroupAssignment random_assignment(int n_units, int n_groups, std::uint64_t seed) {
  if (n_units < n_groups) {
    std::ostringstream msg;
    msg << "cannot form " << n_groups << " non-empty groups from " << n_units << " units";
    throw ValidationError(msg.str());
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> draw(0, n_groups - 1);
  std::vector<int> labels(static_cast<std::size_t>(n_units));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<char> seen(static_cast<std::size_t>(n_groups), 0);
    int distinct = 0;
    for (auto& l : labels) {
      l = draw(rng);
      if (!seen[static_cast<std::size_t>(l)]) {
        seen[static_cast<std::size_t>(l)] = 1;
        ++distinct;
      }
    }
    if (distinct == n_groups) return GroupAssignment(std::move(labels), n_groups);
  }
  // N close to G: seed one unit per group, draw the rest.
  std::vector<int> order(static_cast<std::size_t>(n_units));
  for (int i = 0; i < n_units; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 0; i < n_units; ++i) {
    labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i < n_groups ? i : draw(rng);
  }
  return GroupAssignment(std::move(labels), n_groups);
}

GfeStartResult run_gfe_start(const Panel& panel, GroupAssignment initial, const GfeOptions& opts,
                             const ModelDesign& design) {
  if (initial.has_empty_group()) throw ValidationError("initial assignment has an empty group");
  GfeStartResult out;
  out.assignment = std::move(initial);
  out.path = fit_paths_unpenalized(panel, out.assignment, design, opts.singular_policy);
  out.ssr = total_ssr(panel, out.assignment, out.path, design.mode);
  out.ssr_trace.push_back(out.ssr);
  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    out.iterations = iter;
    auto labels = assign_groups(panel, out.path, design.mode).labels();
    out.repairs += repair_empty_groups(panel, labels, out.assignment.n_groups(), out.path, design.mode);
    GroupAssignment next(std::move(labels), out.assignment.n_groups());
    if (next == out.assignment) {
      out.converged = true;
      break;
    }
    out.assignment = std::move(next);
    out.path = fit_paths_unpenalized(panel, out.assignment, design, opts.singular_policy);
    out.ssr = total_ssr(panel, out.assignment, out.path, design.mode);
    out.ssr_trace.push_back(out.ssr);
  }
  return out;
}

GfeResult fit_gfe(const Panel& panel, int n_groups, const GfeOptions& opts, const ModelDesign& design) {
  if (n_groups < 1) throw ValidationError("number of groups must be positive");
  if (opts.n_starts < 1 || opts.max_iters < 1) throw ValidationError("n_starts and max_iters must be positive");
  if (n_groups > panel.n_units()) throw ValidationError("more groups than units");

  if (n_groups == 1) {
    auto start = run_gfe_start(panel, GroupAssignment::single_group(panel.n_units()), opts, design);
    return {std::move(start.path), std::move(start.assignment), start.ssr, 0, 0};
  }

  std::vector<std::optional<GfeStartResult>> starts(static_cast<std::size_t>(opts.n_starts));
  std::vector<std::string> errors(static_cast<std::size_t>(opts.n_starts));
  parallel_for(opts.n_starts, opts.threads, [&](int s) {
    try {
      auto init = random_assignment(panel.n_units(), n_groups, derive_seed(opts.seed, static_cast<std::uint64_t>(s)));
      starts[static_cast<std::size_t>(s)] = run_gfe_start(panel, std::move(init), opts, design);
    } catch (const NumericalError& e) {
      errors[static_cast<std::size_t>(s)] = e.what();
    }
  });

  GfeResult best;
  best.ssr = std::numeric_limits<double>::infinity();
  best.best_start = -1;
  for (int s = 0; s < opts.n_starts; ++s) {
    auto& r = starts[static_cast<std::size_t>(s)];
    if (!r) {
      ++best.failed_starts;
      continue;
    }
    if (r->ssr < best.ssr) {
      best.ssr = r->ssr;
      best.best_start = s;
    }
  }
  if (best.best_start < 0) {
    throw NumericalError("all " + std::to_string(opts.n_starts) + " GFE starts failed; first error: " + errors.front());
  }
  auto& winner = *starts[static_cast<std::size_t>(best.best_start)];
  best.path = std::move(winner.path);
  best.assignment = std::move(winner.assignment);
  return best;
}

}  // namespace gagfl
