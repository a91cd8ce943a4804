#include "gagfl/selection.hpp"

#include "gagfl/error.hpp"
#include "gagfl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace gagfl {

void LambdaGrid::validate() const {
  if (!(min > 0.0) || !(max > min)) throw ValidationError("lambda grid needs 0 < min < max");
  if (n_points < 2) throw ValidationError("lambda grid needs at least 2 points");
}

std::vector<double> LambdaGrid::values() const {
  validate();
  std::vector<double> out(static_cast<std::size_t>(n_points));
  const double a = std::log(min);
  const double b = std::log(max);
  for (int q = 0; q < n_points; ++q) out[static_cast<std::size_t>(q)] = std::exp(a + (b - a) * q / (n_points - 1));
  out.front() = min;
  out.back() = max;
  return out;
}

double ic_rho(int n_units, int n_periods, double c) {
  const double nt = static_cast<double>(n_units) * n_periods;
  return c * std::log(nt) / std::sqrt(nt);
}

double ic_value(double sse, int n_params, int n_units, int n_periods, double c) {
  return sse + ic_rho(n_units, n_periods, c) * n_params;
}

double bic_value(double sse, int n_params, double sigma2, int n_units, int n_periods) {
  const double nt = static_cast<double>(n_units) * n_periods;
  return sse + sigma2 * (n_params + n_units) / nt * std::log(nt);
}

std::size_t ic_lambda(const std::vector<FitResult>& fits, int n_units, int n_periods, double c) {
  if (fits.empty()) throw ValidationError("no fits to choose lambda from");
  std::size_t best = 0;
  double best_ic = std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < fits.size(); ++q) {
    const double v = ic_value(fits[q].sse, fits[q].n_params, n_units, n_periods, c);
    if (v < best_ic) {
      best_ic = v;
      best = q;
    }
  }
  return best;
}

LambdaSelection select_lambda(const Panel& panel, int n_groups, const SelectionOptions& sel,
                              const GagflOptions& opts) {
  const auto grid = sel.grid.values();
  const Preliminary prelim = preliminary_fit(panel, n_groups, opts);
  std::vector<std::optional<FitResult>> slots(grid.size());
  std::vector<std::string> errors(grid.size());
  parallel_for(static_cast<int>(grid.size()), sel.threads, [&](int q) {
    try {
      slots[static_cast<std::size_t>(q)] = fit_gagfl_from(panel, prelim, grid[static_cast<std::size_t>(q)], opts);
    } catch (const NumericalError& e) {
      errors[static_cast<std::size_t>(q)] = e.what();
    }
  });
  LambdaSelection out;
  out.initial_sse = prelim.gfe.ssr / (static_cast<double>(panel.n_units()) * panel.n_periods());
  for (std::size_t q = 0; q < grid.size(); ++q) {
    if (slots[q]) {
      out.fits.push_back(std::move(*slots[q]));
    } else {
      std::ostringstream msg;
      msg << "G=" << n_groups << ", lambda=" << grid[q] << " failed: " << errors[q];
      out.warnings.push_back(msg.str());
    }
  }
  if (out.fits.empty()) {
    throw NumericalError("every lambda failed for G=" + std::to_string(n_groups) + ": " + errors.front());
  }
  for (const auto& f : out.fits) out.ic.push_back(ic_value(f.sse, f.n_params, panel.n_units(), panel.n_periods(), sel.ic_c));
  out.chosen = ic_lambda(out.fits, panel.n_units(), panel.n_periods(), sel.ic_c);
  return out;
}

const FitResult* SelectionReport::fit_for(int n_groups) const {
  for (std::size_t q = 0; q < choices.size(); ++q) {
    if (choices[q].n_groups == n_groups) return &choice_fits[q];
  }
  return nullptr;
}

SelectionReport bic_groups(const Panel& panel, const std::vector<int>& requested, const SelectionOptions& sel,
                           const GagflOptions& opts) {
  std::vector<int> group_range = requested;
  std::sort(group_range.begin(), group_range.end());
  group_range.erase(std::unique(group_range.begin(), group_range.end()), group_range.end());
  if (group_range.empty()) throw ValidationError("empty range of group numbers");
  for (int g : group_range) {
    if (g < 1 || g > panel.n_units()) throw ValidationError("group number out of range: " + std::to_string(g));
  }
  const int n = panel.n_units();
  const int t_len = panel.n_periods();
  const int k = panel.n_regressors();

  SelectionReport report;
  std::map<int, LambdaSelection> per_g;
  auto run = [&](int g) -> bool {
    if (per_g.count(g)) return true;
    try {
      per_g.emplace(g, select_lambda(panel, g, sel, opts));
      auto& w = per_g.at(g).warnings;
      report.warnings.insert(report.warnings.end(), w.begin(), w.end());
      return true;
    } catch (const NumericalError& e) {
      report.warnings.push_back("G=" + std::to_string(g) + " excluded: " + e.what());
      return false;
    }
  };

  if (!run(1)) throw NumericalError("the single-group fit failed; BIC scale is undefined");
  report.sigma2 = per_g.at(1).best().sse;

  int best_g = 0;
  double best_bic = std::numeric_limits<double>::infinity();
  for (int g : group_range) {
    if (!run(g)) continue;
    const auto& ls = per_g.at(g);
    const FitResult& f = ls.best();
    GroupChoice c;
    c.n_groups = g;
    c.lambda = f.lambda;
    c.ic = ls.ic[ls.chosen];
    c.sse = f.sse;
    c.n_params = f.n_params;
    c.initial_sse = ls.initial_sse;
    c.break_counts = f.breaks.break_counts();
    c.bic = sel.bic_variant == BicVariant::final_estimates
                ? bic_value(f.sse, f.n_params, report.sigma2, n, t_len)
                : bic_value(ls.initial_sse, g * t_len * k, report.sigma2, n, t_len);
    for (std::size_t q = 0; q < ls.fits.size(); ++q) {
      SelectionRow row;
      row.n_groups = g;
      row.lambda = ls.fits[q].lambda;
      row.ic = ls.ic[q];
      row.bic = bic_value(ls.fits[q].sse, ls.fits[q].n_params, report.sigma2, n, t_len);
      row.sse = ls.fits[q].sse;
      row.n_params = ls.fits[q].n_params;
      row.break_counts = ls.fits[q].breaks.break_counts();
      row.chosen = q == ls.chosen;
      report.rows.push_back(std::move(row));
    }
    if (c.bic < best_bic) {
      best_bic = c.bic;
      best_g = g;
    }
    report.choices.push_back(std::move(c));
    report.choice_fits.push_back(f);
  }
  if (best_g == 0) throw NumericalError("every group number failed");
  report.chosen_groups = best_g;
  report.chosen_fit = per_g.at(best_g).best();
  return report;
}

}  // namespace gagfl
