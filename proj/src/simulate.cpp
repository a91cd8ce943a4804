#include "gagfl/simulate.hpp"

#include "gagfl/error.hpp"
#include "gagfl/parallel.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace gagfl {

void DgpSpec::validate() const {
  if (n_units < 2 || n_periods < 2) throw ValidationError("simulation needs N >= 2 and T >= 2");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be nonnegative");
  if (shares.size() != 3) throw ValidationError("the designs have exactly three groups (three shares)");
  double total = 0.0;
  for (double s : shares) {
    if (!(s > 0.0)) throw ValidationError("group shares must be positive");
    total += s;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("group shares must sum to 1");
  if (dgp == Dgp::dgp3 && n_periods < 3) throw ValidationError("DGP.3 needs T >= 3 for differencing");
  for (int n : group_sizes(n_units, shares)) {
    if (n < 1) throw ValidationError("a group share rounds to zero units");
  }
}

std::vector<int> group_sizes(int n_units, const std::vector<double>& shares) {
  std::vector<int> sizes;
  int used = 0;
  for (double s : shares) {
    sizes.push_back(static_cast<int>(std::floor(n_units * s + 1e-9)));
    used += sizes.back();
  }
  for (std::size_t g = 0; used < n_units; g = (g + 1) % sizes.size(), ++used) ++sizes[g];
  return sizes;
}

namespace {

std::vector<int> layout_dates(int t_len, int group, BreakLayout layout) {
  if (group == 2) return {};
  if (layout == BreakLayout::standard) {
    return group == 0 ? std::vector<int>{t_len / 2, 5 * t_len / 6} : std::vector<int>{t_len / 3, 5 * t_len / 6};
  }
  return group == 0 ? std::vector<int>{t_len / 2, 2 * t_len / 3} : std::vector<int>{t_len / 3, t_len / 2};
}

Matrix regime_values(const DgpSpec& spec, int group) {
  static const double slopes[3][3] = {{1.0, 2.0, 3.0}, {3.0, 4.0, 5.0}, {1.5, 1.5, 1.5}};
  static const double lags[3][3] = {{0.2, 0.8, 0.2}, {-0.3, -0.6, -0.9}, {0.5, 0.5, 0.5}};
  const int n_regimes = group == 2 ? 1 : 3;
  const bool dynamic = spec.dgp == Dgp::dgp4;
  Matrix out(n_regimes, dynamic ? 2 : 1);
  for (int j = 0; j < n_regimes; ++j) {
    double b = slopes[group][j];
    if (spec.small_breaks) b = 1.5 + 0.25 * (b - 1.5);
    if (dynamic) {
      out(j, 0) = lags[group][j];
      out(j, 1) = b;
    } else {
      out(j, 0) = b;
    }
  }
  return out;
}

}  // namespace

BreakStructure true_breaks(const DgpSpec& spec) {
  BreakStructure bs;
  bs.n_periods = spec.n_periods;
  for (int g = 0; g < 3; ++g) {
    GroupBreaks gb;
    gb.dates = layout_dates(spec.n_periods, g, spec.layout);
    for (std::size_t j = 0; j < gb.dates.size(); ++j) {
      const bool low = gb.dates[j] < 2;
      const bool clash = j > 0 && gb.dates[j] <= gb.dates[j - 1];
      if (low || clash) {
        std::ostringstream msg;
        msg << "T=" << spec.n_periods << " is too short for group " << g + 1 << ": break dates";
        for (int d : gb.dates) msg << ' ' << d;
        msg << (low ? " fall before period 2" : " collide");
        throw ValidationError(msg.str());
      }
    }
    gb.regimes = regime_values(spec, g);
    bs.groups.push_back(std::move(gb));
  }
  return bs;
}

SimData generate(const DgpSpec& spec) {
  spec.validate();
  const int n = spec.n_units;
  const int t_len = spec.n_periods;
  const BreakStructure breaks = true_breaks(spec);
  const CoefficientPath beta = expand_regimes(breaks, t_len);
  const auto sizes = group_sizes(n, spec.shares);
  std::vector<int> labels;
  for (int g = 0; g < 3; ++g) labels.insert(labels.end(), static_cast<std::size_t>(sizes[static_cast<std::size_t>(g)]), g);

  const bool dynamic = spec.dgp == Dgp::dgp4;
  const int k = dynamic ? 2 : 1;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  Matrix y(n, t_len);
  Matrix x(static_cast<Eigen::Index>(n) * t_len, k);

  for (int i = 0; i < n; ++i) {
    const int g = labels[static_cast<std::size_t>(i)];
    const double shift = spec.group_dependent_x ? 0.5 * (g - 1) : 0.0;
    const Matrix& b = beta.group(g);
    auto draw_x = [&] { return shift + std_normal(rng); };

    double lag = 0.0;
    if (dynamic) {
      for (int s = 0; s < 100; ++s) {
        const double xs = draw_x();
        lag = b(0, 0) * lag + b(0, 1) * xs + spec.sigma * std_normal(rng);
      }
    }
    double eps_prev = spec.sigma * std_normal(rng);  // stationary start for DGP.2
    std::vector<double> xi(static_cast<std::size_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
      const double xv = draw_x();
      xi[static_cast<std::size_t>(t)] = xv;
      double eps;
      if (spec.dgp == Dgp::dgp2) {
        eps = 0.5 * eps_prev + std::sqrt(0.75) * spec.sigma * std_normal(rng);
        eps_prev = eps;
      } else {
        eps = spec.sigma * std_normal(rng);
      }
      const auto row = static_cast<Eigen::Index>(i) * t_len + t;
      if (dynamic) {
        x(row, 0) = lag;
        x(row, 1) = xv;
        y(i, t) = b(t, 0) * lag + b(t, 1) * xv + eps;
        lag = y(i, t);
      } else {
        x(row, 0) = xv;
        y(i, t) = b(t, 0) * xv + eps;
      }
    }
    if (spec.dgp == Dgp::dgp3) {
      const double mu = std::accumulate(xi.begin(), xi.end(), 0.0) / t_len;
      y.row(i).array() += mu;
    }
  }
  return {Panel(std::move(y), std::move(x)), {GroupAssignment(std::move(labels), 3), beta, breaks}};
}

ReplicationRow run_replication(const StudyConfig& config, int rep) {
  ReplicationRow row;
  row.rep = rep;
  const std::uint64_t rep_seed = derive_seed(config.seed, static_cast<std::uint64_t>(rep));
  try {
    DgpSpec spec = config.spec;
    spec.seed = derive_seed(rep_seed, 0);
    const SimData data = generate(spec);
    GagflOptions opts = config.fit;
    opts.gfe.seed = derive_seed(rep_seed, 1);
    opts.gfe.threads = 1;
    SelectionOptions sel = config.selection;
    sel.threads = 1;
    const int true_g = data.truth.assignment.n_groups();

    std::optional<FitResult> fit;
    if (!config.group_range.empty()) {
      const SelectionReport report = bic_groups(data.panel, config.group_range, sel, opts);
      row.g_selected = report.chosen_groups;
      if (const FitResult* f = report.fit_for(true_g)) fit = *f;
    }
    if (!fit) {
      fit = config.lambda ? fit_gagfl(data.panel, true_g, *config.lambda, opts)
                          : select_lambda(data.panel, true_g, sel, opts).best();
    }
    row.metrics = evaluate_fit(*fit, data.truth.assignment, data.truth.breaks, data.truth.beta_path);
    row.lambda = fit->lambda;
    row.break_counts = fit->breaks.break_counts();
    row.outer_iterations = fit->n_outer_iterations;
    row.converged = fit->converged;
    row.ok = true;
  } catch (const Error& e) {
    row.error = e.what();
  }
  return row;
}

StudySummary summarize(const std::vector<ReplicationRow>& rows, int n_true_groups) {
  StudySummary s;
  const auto ng = static_cast<std::size_t>(n_true_groups);
  s.break_accuracy.assign(ng, 0.0);
  s.hd_conditional.assign(ng, 0.0);
  s.hd_unconditional.assign(ng, 0.0);
  std::vector<int> cond_rows(ng, 0);
  int selected_rows = 0;
  int selected_right = 0;
  double cov = 0.0;
  for (const auto& r : rows) {
    if (!r.ok) {
      ++s.n_failed;
      continue;
    }
    ++s.n_ok;
    s.mean_mf += r.metrics.mf;
    s.mean_rmse += r.metrics.rmse;
    if (r.metrics.coverage_ok) {
      cov += r.metrics.coverage;
      ++s.coverage_rows;
    }
    if (r.g_selected > 0) {
      ++selected_rows;
      if (r.g_selected == n_true_groups) ++selected_right;
    }
    for (std::size_t g = 0; g < ng; ++g) {
      const bool right = r.metrics.break_count_correct[g];
      s.break_accuracy[g] += right;
      s.hd_unconditional[g] += r.metrics.hd[g];
      if (right) {
        s.hd_conditional[g] += r.metrics.hd[g];
        ++cond_rows[g];
      }
    }
  }
  if (s.n_ok > 0) {
    s.mean_mf /= s.n_ok;
    s.mean_rmse /= s.n_ok;
    for (std::size_t g = 0; g < ng; ++g) {
      s.break_accuracy[g] /= s.n_ok;
      s.hd_unconditional[g] /= s.n_ok;
      s.hd_conditional[g] = cond_rows[g] ? s.hd_conditional[g] / cond_rows[g] : std::numeric_limits<double>::quiet_NaN();
    }
  }
  if (s.coverage_rows > 0) s.mean_coverage = cov / s.coverage_rows;
  if (selected_rows > 0) s.g_correct = static_cast<double>(selected_right) / selected_rows;
  return s;
}

StudyResult run_study(const StudyConfig& config) {
  if (config.n_replications < 1) throw ValidationError("n_replications must be positive");
  config.spec.validate();
  StudyResult result;
  result.rows.resize(static_cast<std::size_t>(config.n_replications));
  parallel_for(config.n_replications, config.threads,
               [&](int r) { result.rows[static_cast<std::size_t>(r)] = run_replication(config, r); });
  result.summary = summarize(result.rows, 3);
  return result;
}

void write_study_csv(std::ostream& out, const StudyResult& result) {
  out << "rep,mf,hd_g1,hd_g2,break_acc_g1,break_acc_g2,break_acc_g3,rmse,coverage,g_selected,"
         "hd_g3,lambda,m_g1,m_g2,m_g3,outer_iters,converged,status\n";
  out.precision(10);
  for (const auto& r : result.rows) {
    out << r.rep + 1 << ',';
    if (!r.ok) {
      out << ",,,,,,,,,,,,,,,,\"" << r.error << "\"\n";
      continue;
    }
    const auto& m = r.metrics;
    out << m.mf << ',' << m.hd[0] << ',' << m.hd[1] << ',' << int(m.break_count_correct[0]) << ','
        << int(m.break_count_correct[1]) << ',' << int(m.break_count_correct[2]) << ',' << m.rmse << ',';
    if (m.coverage_ok) out << m.coverage;
    out << ',' << r.g_selected << ',' << m.hd[2] << ',' << r.lambda;
    for (std::size_t g = 0; g < 3; ++g) {
      out << ',';
      if (g < r.break_counts.size()) out << r.break_counts[g];
    }
    out << ',' << r.outer_iterations << ',' << int(r.converged) << ",ok\n";
  }
}

}  // namespace gagfl
