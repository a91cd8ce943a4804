#include "gagfl/agfl.hpp"

#include "gagfl/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace gagfl {

void AgflOptions::validate() const {
  if (!(kappa > 0.0)) throw ValidationError("kappa must be positive");
  if (!(tol_theta > 0.0) || !(tol_obj > 0.0)) throw ValidationError("tolerances must be positive");
  if (max_sweeps < 1) throw ValidationError("max_sweeps must be positive");
  if (!(weight_floor > 0.0)) throw ValidationError("weight_floor must be positive");
}

AdaptiveWeights compute_weights(const CoefficientPath& prelim, double kappa, double weight_floor,
                                const std::vector<bool>& mask) {
  const int t_len = prelim.n_periods();
  const int k = prelim.n_regressors();
  AdaptiveWeights w;
  w.values.resize(prelim.n_groups(), t_len - 1);
  for (int g = 0; g < prelim.n_groups(); ++g) {
    const Matrix& b = prelim.group(g);
    for (int s = 1; s < t_len; ++s) {
      double sq = 0.0;
      for (int j = 0; j < k; ++j) {
        if (!mask.empty() && !mask[static_cast<std::size_t>(j)]) continue;
        const double d = b(s, j) - b(s - 1, j);
        sq += d * d;
      }
      w.values(g, s - 1) = std::pow(std::max(std::sqrt(sq), weight_floor), -kappa);
    }
  }
  return w;
}

namespace {

struct BlockCache {
  Matrix h;
  Vector eigenvalues;
  Matrix eigenvectors;
};

BlockCache make_cache(const Matrix& h) {
  BlockCache c;
  c.h = h;
  if (h.rows() > 1) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    c.eigenvalues = es.eigenvalues();
    c.eigenvectors = es.eigenvectors();
  } else {
    c.eigenvalues = h.diagonal();
    c.eigenvectors = Matrix::Identity(h.rows(), h.rows());
  }
  return c;
}

BlockUpdate majorize(const BlockCache& c, const Vector& b, double tau, const Vector& current) {
  BlockUpdate out;
  out.fallback = true;
  const double lip = std::max(c.eigenvalues.maxCoeff(), std::numeric_limits<double>::min()) * (1.0 + 1e-12);
  const Vector z = current - (c.h * current - b) / lip;
  const double nz = z.norm();
  const double shrink = nz > 0.0 ? std::max(0.0, 1.0 - tau / (lip * nz)) : 0.0;
  out.theta = shrink * z;
  return out;
}

BlockUpdate solve_block(const BlockCache& c, const Vector& b, double tau, const Vector& current) {
  BlockUpdate out;
  const double nb = b.norm();
  if (nb <= tau) {
    out.theta = Vector::Zero(b.size());
    return out;
  }
  if (b.size() == 1) {
    const double h = c.h(0, 0);
    if (h > 0.0) {
      out.theta = b * ((1.0 - tau / nb) / h);
      return out;
    }
    return majorize(c, b, tau, current);
  }
  const Vector& lam = c.eigenvalues;
  const Vector bt = c.eigenvectors.transpose() * b;
  const double lmax = lam.maxCoeff();
  const double lmin = lam.minCoeff();
  if (!(lmax > 0.0)) return majorize(c, b, tau, current);

  // sum_j bt_j^2 / (lam_j r + tau)^2 = 1 in r = ||theta||; decreasing and convex.
  double lo = (nb - tau) / lmax;
  double hi = lmin > 1e-14 * lmax ? (nb - tau) / lmin : std::numeric_limits<double>::infinity();
  double r = lo;
  bool done = false;
  for (int it = 0; it < 60; ++it) {
    out.iterations = it + 1;
    double f = -1.0;
    double df = 0.0;
    for (Eigen::Index j = 0; j < lam.size(); ++j) {
      const double den = lam[j] * r + tau;
      const double q = bt[j] * bt[j] / (den * den);
      f += q;
      df -= 2.0 * lam[j] * q / den;
    }
    if (std::abs(f) <= 1e-15) {
      done = true;
      break;
    }
    if (f > 0.0) lo = r; else hi = r;
    double next = df < 0.0 ? r - f / df : std::numeric_limits<double>::quiet_NaN();
    if (!(next > lo && next < hi)) {
      if (!std::isfinite(hi)) break;
      next = 0.5 * (lo + hi);
    }
    const double step = std::abs(next - r);
    r = next;
    if (step <= 1e-15 * r) {
      done = true;
      break;
    }
  }
  if (!done) return majorize(c, b, tau, current);
  Vector coef(lam.size());
  for (Eigen::Index j = 0; j < lam.size(); ++j) coef[j] = r * bt[j] / (lam[j] * r + tau);
  out.theta = c.eigenvectors * coef;
  return out;
}

}  // namespace

BlockUpdate block_update(const Matrix& h, const Vector& b, double threshold, const Vector& current) {
  return solve_block(make_cache(h), b, threshold, current);
}

double BlockProblem::penalty(const Vector& v) const {
  double s = 0.0;
  for (std::size_t q = 1; q < blocks.size(); ++q) {
    s += weights[static_cast<Eigen::Index>(q - 1)] * v.segment(blocks[q].offset, blocks[q].size).norm();
  }
  return s;
}

double BlockProblem::objective(const Vector& v, double lambda) const {
  return loss.value(v) + (lambda > 0.0 ? lambda * penalty(v) : 0.0);
}

namespace {

class Block0Solver {
 public:
  Block0Solver(const Matrix& h00, SingularPolicy policy) {
    if (h00.rows() == 0) return;
    ldlt_.compute(h00);
    bool singular = ldlt_.info() != Eigen::Success;
    if (!singular) {
      const Vector d = ldlt_.vectorD();
      const double top = d.cwiseAbs().maxCoeff();
      singular = top <= 0.0 || d.minCoeff() <= 1e-12 * top;
    }
    if (singular) {
      if (policy == SingularPolicy::error) {
        throw NumericalError("singular Gram matrix: unpenalized coefficients of the group");
      }
      pinv_ = pseudo_inverse(h00);
      use_pinv_ = true;
    }
  }
  Vector solve(const Vector& b) const { return use_pinv_ ? Vector(pinv_ * b) : Vector(ldlt_.solve(b)); }

 private:
  Eigen::LDLT<Matrix> ldlt_;
  Matrix pinv_;
  bool use_pinv_ = false;
};

}  // namespace

BcdResult solve_bcd(const BlockProblem& problem, double lambda, const AgflOptions& opts, const Vector* init,
                    std::vector<double>* trace) {
  const Matrix& h = problem.loss.hessian;
  const Vector& l = problem.loss.linear;
  const double scale = problem.loss.scale;
  const auto p = h.rows();
  const auto& blocks = problem.blocks;
  if (lambda < 0.0 || !std::isfinite(lambda)) throw ValidationError("lambda must be a nonnegative finite number");

  BcdResult out;
  out.params = init ? *init : Vector::Zero(p);
  Vector hv = h * out.params;

  const auto b0 = blocks.front();
  const Block0Solver block0(h.block(b0.offset, b0.offset, b0.size, b0.size), opts.singular_policy);
  std::vector<BlockCache> caches;
  caches.reserve(blocks.size());
  for (std::size_t q = 1; q < blocks.size(); ++q) {
    caches.push_back(make_cache(h.block(blocks[q].offset, blocks[q].offset, blocks[q].size, blocks[q].size)));
  }

  auto objective = [&] {
    const Vector& v = out.params;
    return (v.dot(hv) - 2.0 * l.dot(v) + problem.loss.constant) / scale + lambda * problem.penalty(v);
  };
  auto apply = [&](const ParamLayout::Block& blk, const Vector& next) {
    const Vector delta = next - out.params.segment(blk.offset, blk.size);
    if (delta.isZero(0.0)) return 0.0;
    hv.noalias() += h.middleCols(blk.offset, blk.size) * delta;
    out.params.segment(blk.offset, blk.size) = next;
    return delta.cwiseAbs().maxCoeff();
  };

  auto sweep = [&] {
    double max_change = 0.0;
    if (b0.size > 0) {
      const auto cur = out.params.segment(b0.offset, b0.size);
      const Vector rhs = l.segment(b0.offset, b0.size) - hv.segment(b0.offset, b0.size) +
                         h.block(b0.offset, b0.offset, b0.size, b0.size) * cur;
      max_change = std::max(max_change, apply(b0, block0.solve(rhs)));
      if (trace) trace->push_back(objective());
    }
    for (std::size_t q = 1; q < blocks.size(); ++q) {
      const auto& blk = blocks[q];
      const BlockCache& c = caches[q - 1];
      const Vector cur = out.params.segment(blk.offset, blk.size);
      const Vector rhs = l.segment(blk.offset, blk.size) - hv.segment(blk.offset, blk.size) + c.h * cur;
      const double tau = 0.5 * scale * lambda * problem.weights[static_cast<Eigen::Index>(q - 1)];
      BlockUpdate up = solve_block(c, rhs, tau, cur);
      if (up.fallback) ++out.fallbacks;
      max_change = std::max(max_change, apply(blk, up.theta));
      if (trace) trace->push_back(objective());
    }
    return max_change;
  };

  double prev = objective();
  if (trace) trace->push_back(prev);
  auto run_sweeps = [&] {
    while (out.sweeps < opts.max_sweeps) {
      ++out.sweeps;
      const double max_change = sweep();
      const double now = objective();
      const bool small_obj = std::abs(prev - now) <= opts.tol_obj * std::max(std::abs(now), 1e-300);
      prev = now;
      if (max_change < opts.tol_theta || small_obj) return true;
    }
    return false;
  };

  // Newton steps on the blocks that are currently nonzero; the penalty is
  // smooth there. Zero blocks stay fixed.
  auto polish = [&] {
    std::vector<Eigen::Index> idx;
    std::vector<std::size_t> active;
    for (Eigen::Index j = 0; j < b0.size; ++j) idx.push_back(b0.offset + j);
    for (std::size_t q = 1; q < blocks.size(); ++q) {
      const auto& blk = blocks[q];
      if (out.params.segment(blk.offset, blk.size).norm() == 0.0) continue;
      active.push_back(q);
      for (Eigen::Index j = 0; j < blk.size; ++j) idx.push_back(blk.offset + j);
    }
    const auto na = static_cast<Eigen::Index>(idx.size());
    if (na == 0) return;
    Matrix hs(na, na);
    Matrix cols(p, na);
    for (Eigen::Index a = 0; a < na; ++a) {
      cols.col(a) = h.col(idx[static_cast<std::size_t>(a)]);
      for (Eigen::Index c = 0; c < na; ++c) hs(a, c) = h(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(c)]);
    }
    for (int it = 0; it < 50; ++it) {
      Vector g(na);
      for (Eigen::Index a = 0; a < na; ++a) {
        const auto j = idx[static_cast<std::size_t>(a)];
        g[a] = 2.0 * (hv[j] - l[j]) / scale;
      }
      Matrix hess = 2.0 * hs / scale;
      Eigen::Index pos = b0.size;
      for (std::size_t q : active) {
        const auto& blk = blocks[q];
        const Vector th = out.params.segment(blk.offset, blk.size);
        const double nt = th.norm();
        if (nt == 0.0) return;
        const double pen = lambda * problem.weights[static_cast<Eigen::Index>(q - 1)];
        const Vector u = th / nt;
        g.segment(pos, blk.size) += pen * u;
        hess.block(pos, pos, blk.size, blk.size) +=
            (pen / nt) * (Matrix::Identity(blk.size, blk.size) - u * u.transpose());
        pos += blk.size;
      }
      if (g.cwiseAbs().maxCoeff() <= 1e-13) return;
      Eigen::LDLT<Matrix> ldlt(hess);
      if (ldlt.info() != Eigen::Success) return;
      const Vector d = -ldlt.solve(g);
      if (!d.allFinite()) return;
      const double base = objective();
      const Vector v0 = out.params;
      const Vector hv0 = hv;
      const Vector hd = cols * d;
      double step = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
        for (Eigen::Index a = 0; a < na; ++a) out.params[idx[static_cast<std::size_t>(a)]] = v0[idx[static_cast<std::size_t>(a)]] + step * d[a];
        hv = hv0 + step * hd;
        if (objective() <= base) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        out.params = v0;
        hv = hv0;
        return;
      }
      if (trace) trace->push_back(objective());
      if (step * d.cwiseAbs().maxCoeff() <= 1e-15 * std::max(1.0, v0.cwiseAbs().maxCoeff())) return;
    }
  };

  out.converged = run_sweeps();
  for (int round = 0; round < 20 && out.converged; ++round) {
    polish();
    hv = h * out.params;
    if (kkt_violation(problem, lambda, out.params) <= 1e-10) break;
    prev = objective();
    out.converged = run_sweeps();
  }
  out.objective = objective();
  return out;
}

double lambda_max(const BlockProblem& problem, SingularPolicy policy) {
  const Matrix& h = problem.loss.hessian;
  const Vector& l = problem.loss.linear;
  const auto b0 = problem.blocks.front();
  Vector v = Vector::Zero(h.rows());
  if (b0.size > 0) {
    const Block0Solver solver(h.block(b0.offset, b0.offset, b0.size, b0.size), policy);
    v.segment(b0.offset, b0.size) = solver.solve(l.segment(b0.offset, b0.size));
  }
  const Vector score = l - h * v;
  double out = 0.0;
  for (std::size_t q = 1; q < problem.blocks.size(); ++q) {
    const auto& blk = problem.blocks[q];
    const double w = problem.weights[static_cast<Eigen::Index>(q - 1)];
    out = std::max(out, 2.0 * score.segment(blk.offset, blk.size).norm() / (problem.loss.scale * w));
  }
  return out;
}

double kkt_violation(const BlockProblem& problem, double lambda, const Vector& v) {
  const Vector grad = 2.0 * (problem.loss.hessian * v - problem.loss.linear) / problem.loss.scale;
  const auto b0 = problem.blocks.front();
  double worst = b0.size > 0 ? grad.segment(b0.offset, b0.size).cwiseAbs().maxCoeff() : 0.0;
  for (std::size_t q = 1; q < problem.blocks.size(); ++q) {
    const auto& blk = problem.blocks[q];
    const double pen = lambda * problem.weights[static_cast<Eigen::Index>(q - 1)];
    const auto g = grad.segment(blk.offset, blk.size);
    const auto theta = v.segment(blk.offset, blk.size);
    const double nt = theta.norm();
    const double viol = nt == 0.0 ? std::max(0.0, g.norm() - pen) : (g + pen * theta / nt).norm();
    worst = std::max(worst, viol);
  }
  return worst;
}

GroupProblem make_group_problem(const Panel& panel, std::span<const int> members, const Vector& weights,
                                const ModelDesign& design, const Matrix* offset, double scale) {
  if (members.empty()) throw ValidationError("cannot fit an empty group");
  const int t_len = panel.n_periods();
  if (weights.size() != t_len - 1) throw ValidationError("weight vector must have T-1 entries");
  if (scale <= 0.0) scale = static_cast<double>(panel.n_units()) * t_len;
  GroupProblem gp{ParamLayout::jumps(t_len, panel.n_regressors(), design), {}};
  const Moments mom = group_moments(panel, members, design.mode, offset);
  gp.problem.loss = project(mom, gp.layout, scale);
  gp.problem.blocks = gp.layout.blocks();
  gp.problem.weights.resize(static_cast<Eigen::Index>(gp.problem.blocks.size()) - 1);
  for (std::size_t q = 1; q < gp.problem.blocks.size(); ++q) {
    gp.problem.weights[static_cast<Eigen::Index>(q - 1)] = weights[gp.problem.blocks[q].period - 1];
  }
  return gp;
}

GroupFit agfl_solve_group(const Panel& panel, std::span<const int> members, const Vector& weights, double lambda,
                          const AgflOptions& opts, const Matrix* init, const ModelDesign& design,
                          const Matrix* offset) {
  const GroupProblem gp = make_group_problem(panel, members, weights, design, offset);
  Vector start;
  if (init) start = gp.layout.from_path(*init);
  const BcdResult r = solve_bcd(gp.problem, lambda, opts, init ? &start : nullptr);
  return {gp.layout.to_path(r.params), r.objective, r.sweeps, r.converged, r.fallbacks};
}

PostLassoFit post_lasso(const Panel& panel, const GroupAssignment& assignment, const BreakStructure& breaks,
                        const ModelDesign& design, SingularPolicy policy) {
  const int k = panel.n_regressors();
  const int t_len = panel.n_periods();
  const int n_groups = assignment.n_groups();
  if (breaks.n_groups() != n_groups) throw ValidationError("break structure and assignment disagree on G");
  for (const auto& gb : breaks.groups) {
    for (std::size_t j = 0; j < gb.dates.size(); ++j) {
      const int d = gb.dates[j];
      if (d < 2 || d > t_len || (j > 0 && d <= gb.dates[j - 1])) {
        throw ValidationError("invalid break dates passed to post-Lasso refit");
      }
    }
  }
  const auto hom = design.coords(CoefKind::homogeneous, k);
  const int kh = static_cast<int>(hom.size());
  const int kf = static_cast<int>(design.coords(CoefKind::fused, k).size());

  std::vector<ParamLayout> layouts;
  std::vector<int> offsets;
  int n_params = 0;
  for (int g = 0; g < n_groups; ++g) {
    layouts.push_back(ParamLayout::regimes(t_len, k, design, breaks.groups[static_cast<std::size_t>(g)].dates));
    offsets.push_back(n_params);
    n_params += layouts.back().n_params();
  }
  const int hom_offset = n_params;
  n_params += kh;

  const int first = first_observation(design.mode);
  auto regressor = [&](int i, int t) {
    Vector z = Vector::Zero(n_params);
    const int g = assignment[i];
    const auto& lay = layouts[static_cast<std::size_t>(g)];
    const auto x = panel.x(i, t);
    z.segment(offsets[static_cast<std::size_t>(g)], lay.n_params()) =
        lay.map().middleRows(t * k, k).transpose() * x.transpose();
    for (int m = 0; m < kh; ++m) z[hom_offset + m] = x(hom[static_cast<std::size_t>(m)]);
    return z;
  };
  auto observation = [&](int i, int t, Vector& z) {
    z = regressor(i, t);
    double resp = panel.y(i, t);
    if (design.mode == Mode::first_difference) {
      z -= regressor(i, t - 1);
      resp -= panel.y(i, t - 1);
    }
    return resp;
  };

  Matrix a = Matrix::Zero(n_params, n_params);
  Vector c = Vector::Zero(n_params);
  Vector z;
  for (int i = 0; i < panel.n_units(); ++i) {
    for (int t = first; t < t_len; ++t) {
      const double resp = observation(i, t, z);
      a.selfadjointView<Eigen::Lower>().rankUpdate(z);
      c += resp * z;
    }
  }
  a = a.selfadjointView<Eigen::Lower>();

  Matrix a_inv;
  if (is_singular(a)) {
    if (policy == SingularPolicy::error) {
      std::ostringstream msg;
      for (int g = 0; g < n_groups && msg.tellp() == 0; ++g) {
        const auto& gb = breaks.groups[static_cast<std::size_t>(g)];
        for (int j = 0; j <= gb.n_breaks(); ++j) {
          const int o = offsets[static_cast<std::size_t>(g)] + j * kf;
          if (kf > 0 && is_singular(a.block(o, o, kf, kf))) {
            msg << "degenerate regime in post-Lasso refit: group " << g + 1 << ", regime " << j + 1
                << " (periods " << gb.regime_start(j) << ".." << gb.regime_end(j, t_len) - 1 << ")";
            break;
          }
        }
      }
      if (msg.tellp() == 0) msg << "singular Gram matrix in post-Lasso refit";
      throw NumericalError(msg.str());
    }
    a_inv = pseudo_inverse(a);
  } else {
    a_inv = a.ldlt().solve(Matrix::Identity(n_params, n_params));
  }
  const Vector beta = a_inv * c;

  Matrix omega = Matrix::Zero(n_params, n_params);
  double ssr = 0.0;
  for (int i = 0; i < panel.n_units(); ++i) {
    Vector score = Vector::Zero(n_params);
    for (int t = first; t < t_len; ++t) {
      const double resp = observation(i, t, z);
      const double e = resp - z.dot(beta);
      ssr += e * e;
      score += e * z;
    }
    omega.selfadjointView<Eigen::Lower>().rankUpdate(score);
  }
  omega = omega.selfadjointView<Eigen::Lower>();
  const Matrix cov = a_inv * omega * a_inv;

  PostLassoFit out;
  out.ssr = ssr;
  out.n_params = n_params;
  out.homogeneous = beta.tail(kh);
  out.breaks.n_periods = t_len;
  std::vector<Matrix> paths, ses;
  for (int g = 0; g < n_groups; ++g) {
    const auto& lay = layouts[static_cast<std::size_t>(g)];
    const int o = offsets[static_cast<std::size_t>(g)];
    const int pg = lay.n_params();
    Matrix path = lay.to_path(beta.segment(o, pg));
    Matrix se = Matrix::Zero(t_len, k);
    const Matrix cov_g = cov.block(o, o, pg, pg);
    for (int t = 0; t < t_len; ++t) {
      for (int j = 0; j < k; ++j) {
        const auto row = lay.map().row(t * k + j);
        se(t, j) = std::sqrt(std::max(0.0, row.dot(cov_g * row.transpose())));
      }
    }
    for (int m = 0; m < kh; ++m) {
      const int j = hom[static_cast<std::size_t>(m)];
      path.col(j).setConstant(beta[hom_offset + m]);
      se.col(j).setConstant(std::sqrt(std::max(0.0, cov(hom_offset + m, hom_offset + m))));
    }
    GroupBreaks gb;
    gb.dates = breaks.groups[static_cast<std::size_t>(g)].dates;
    gb.regimes.resize(gb.n_breaks() + 1, k);
    Matrix rse(gb.n_breaks() + 1, k);
    for (int j = 0; j <= gb.n_breaks(); ++j) {
      gb.regimes.row(j) = path.row(gb.regime_start(j) - 1);
      rse.row(j) = se.row(gb.regime_start(j) - 1);
    }
    out.breaks.groups.push_back(std::move(gb));
    out.regime_std_errors.push_back(std::move(rse));
    paths.push_back(std::move(path));
    ses.push_back(std::move(se));
  }
  out.path = CoefficientPath(std::move(paths));
  out.se_path = CoefficientPath(std::move(ses));
  return out;
}

}  // namespace gagfl
