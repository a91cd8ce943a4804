#include "gagfl/design.hpp"

#include "gagfl/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gagfl {

bool ModelDesign::plain() const {
  return mode == Mode::level &&
         std::all_of(kinds.begin(), kinds.end(), [](CoefKind c) { return c == CoefKind::fused; });
}

bool ModelDesign::has_homogeneous() const {
  return std::any_of(kinds.begin(), kinds.end(), [](CoefKind c) { return c == CoefKind::homogeneous; });
}

std::vector<int> ModelDesign::coords(CoefKind which, int k) const {
  std::vector<int> out;
  for (int j = 0; j < k; ++j) {
    if (kind(j) == which) out.push_back(j);
  }
  return out;
}

std::vector<bool> ModelDesign::fused_mask(int k) const {
  std::vector<bool> out(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) out[static_cast<std::size_t>(j)] = kind(j) == CoefKind::fused;
  return out;
}

void ModelDesign::validate(int k) const {
  if (!kinds.empty() && static_cast<int>(kinds.size()) != k) {
    std::ostringstream msg;
    msg << "coefficient kinds list has " << kinds.size() << " entries for " << k << " regressors";
    throw ValidationError(msg.str());
  }
}

ModelDesign ModelDesign::from_masks(Mode mode, const std::vector<bool>& penalized,
                                    const std::vector<bool>& homogeneous,
                                    const std::vector<bool>& time_invariant) {
  const std::size_t k = penalized.size();
  if ((!homogeneous.empty() && homogeneous.size() != k) ||
      (!time_invariant.empty() && time_invariant.size() != k)) {
    throw ValidationError("coefficient masks have different lengths");
  }
  ModelDesign out;
  out.mode = mode;
  for (std::size_t j = 0; j < k; ++j) {
    const bool hom = !homogeneous.empty() && homogeneous[j];
    const bool inv = !time_invariant.empty() && time_invariant[j];
    if (static_cast<int>(penalized[j]) + static_cast<int>(hom) + static_cast<int>(inv) > 1) {
      std::ostringstream msg;
      msg << "coefficient " << j + 1 << " is claimed by more than one mask";
      throw ValidationError(msg.str());
    }
    if (penalized[j]) {
      out.kinds.push_back(CoefKind::fused);
    } else if (hom) {
      out.kinds.push_back(CoefKind::homogeneous);
    } else if (inv) {
      out.kinds.push_back(CoefKind::time_invariant);
    } else {
      out.kinds.push_back(CoefKind::time_varying);
    }
  }
  return out;
}

FirstDifferenced first_difference(const Panel& panel) {
  if (panel.n_periods() < 3) {
    throw ValidationError("first differencing needs at least 3 periods");
  }
  const int t_len = panel.n_periods();
  FirstDifferenced out;
  out.dy = panel.y_matrix().rightCols(t_len - 1) - panel.y_matrix().leftCols(t_len - 1);
  return out;
}

namespace {

double adjusted_y(const Panel& panel, int i, int t, const Matrix* offset) {
  return offset ? panel.y(i, t) - (*offset)(i, t) : panel.y(i, t);
}

}  // namespace

double residual(const Panel& panel, int i, int t, const Matrix& path, Mode mode, const Matrix* offset) {
  double r = adjusted_y(panel, i, t, offset) - panel.x(i, t).dot(path.row(t));
  if (mode == Mode::first_difference) {
    r -= adjusted_y(panel, i, t - 1, offset) - panel.x(i, t - 1).dot(path.row(t - 1));
  }
  return r;
}

double unit_ssr(const Panel& panel, int i, const Matrix& path, Mode mode, const Matrix* offset) {
  double s = 0.0;
  for (int t = first_observation(mode); t < panel.n_periods(); ++t) {
    const double r = residual(panel, i, t, path, mode, offset);
    s += r * r;
  }
  return s;
}

double total_ssr(const Panel& panel, const GroupAssignment& assignment, const CoefficientPath& path,
                 Mode mode) {
  double s = 0.0;
  for (int i = 0; i < panel.n_units(); ++i) s += unit_ssr(panel, i, path.group(assignment[i]), mode);
  return s;
}

Moments group_moments(const Panel& panel, std::span<const int> members, Mode mode, const Matrix* offset) {
  const int t_len = panel.n_periods();
  const int k = panel.n_regressors();
  Moments m;
  m.gram = Matrix::Zero(t_len * k, t_len * k);
  m.cross = Vector::Zero(t_len * k);
  for (int i : members) {
    for (int t = first_observation(mode); t < t_len; ++t) {
      const Vector a = panel.x(i, t).transpose();
      double resp = adjusted_y(panel, i, t, offset);
      if (mode == Mode::level) {
        m.gram.block(t * k, t * k, k, k).noalias() += a * a.transpose();
        m.cross.segment(t * k, k) += resp * a;
      } else {
        const Vector b = panel.x(i, t - 1).transpose();
        resp -= adjusted_y(panel, i, t - 1, offset);
        const int u = t - 1;
        m.gram.block(t * k, t * k, k, k).noalias() += a * a.transpose();
        m.gram.block(u * k, u * k, k, k).noalias() += b * b.transpose();
        m.gram.block(t * k, u * k, k, k).noalias() -= a * b.transpose();
        m.gram.block(u * k, t * k, k, k).noalias() -= b * a.transpose();
        m.cross.segment(t * k, k) += resp * a;
        m.cross.segment(u * k, k) -= resp * b;
      }
      m.yy += resp * resp;
    }
  }
  return m;
}

ParamLayout ParamLayout::jumps(int n_periods, int n_regressors, const ModelDesign& design) {
  ParamLayout out(n_periods, n_regressors);
  const auto fused = design.coords(CoefKind::fused, n_regressors);
  const auto varying = design.coords(CoefKind::time_varying, n_regressors);
  const auto fixed = design.coords(CoefKind::time_invariant, n_regressors);
  const int kf = static_cast<int>(fused.size());
  const int ku = static_cast<int>(varying.size());
  const int kc = static_cast<int>(fixed.size());
  const int p0 = kf + n_periods * ku + kc;
  const int p = p0 + (n_periods - 1) * kf;
  out.map_ = Matrix::Zero(n_periods * n_regressors, p);
  for (int t = 0; t < n_periods; ++t) {
    for (int m = 0; m < kf; ++m) {
      const int row = t * n_regressors + fused[static_cast<std::size_t>(m)];
      out.map_(row, m) = 1.0;
      for (int s = 1; s <= t; ++s) out.map_(row, p0 + (s - 1) * kf + m) = 1.0;
    }
    for (int m = 0; m < ku; ++m) {
      out.map_(t * n_regressors + varying[static_cast<std::size_t>(m)], kf + t * ku + m) = 1.0;
    }
    for (int m = 0; m < kc; ++m) {
      out.map_(t * n_regressors + fixed[static_cast<std::size_t>(m)], kf + n_periods * ku + m) = 1.0;
    }
  }
  out.blocks_.push_back({0, p0, -1});
  if (kf > 0) {
    for (int s = 1; s < n_periods; ++s) out.blocks_.push_back({p0 + (s - 1) * kf, kf, s});
  }
  return out;
}

ParamLayout ParamLayout::free_path(int n_periods, int n_regressors, const ModelDesign& design) {
  ParamLayout out(n_periods, n_regressors);
  std::vector<int> per_period;
  for (int j = 0; j < n_regressors; ++j) {
    if (design.kind(j) == CoefKind::fused || design.kind(j) == CoefKind::time_varying) per_period.push_back(j);
  }
  const auto fixed = design.coords(CoefKind::time_invariant, n_regressors);
  const int kv = static_cast<int>(per_period.size());
  const int p = n_periods * kv + static_cast<int>(fixed.size());
  out.map_ = Matrix::Zero(n_periods * n_regressors, p);
  for (int t = 0; t < n_periods; ++t) {
    for (int m = 0; m < kv; ++m) out.map_(t * n_regressors + per_period[static_cast<std::size_t>(m)], t * kv + m) = 1.0;
    for (std::size_t m = 0; m < fixed.size(); ++m) {
      out.map_(t * n_regressors + fixed[m], n_periods * kv + static_cast<int>(m)) = 1.0;
    }
  }
  out.blocks_.push_back({0, p, -1});
  return out;
}

ParamLayout ParamLayout::regimes(int n_periods, int n_regressors, const ModelDesign& design,
                                 std::span<const int> dates) {
  ParamLayout out(n_periods, n_regressors);
  const auto fused = design.coords(CoefKind::fused, n_regressors);
  const auto varying = design.coords(CoefKind::time_varying, n_regressors);
  const auto fixed = design.coords(CoefKind::time_invariant, n_regressors);
  const int kf = static_cast<int>(fused.size());
  const int ku = static_cast<int>(varying.size());
  const int n_regimes = static_cast<int>(dates.size()) + 1;
  const int pf = n_regimes * kf;
  const int p = pf + n_periods * ku + static_cast<int>(fixed.size());
  out.map_ = Matrix::Zero(n_periods * n_regressors, p);
  int regime = 0;
  for (int t = 0; t < n_periods; ++t) {
    while (regime < n_regimes - 1 && t + 1 >= dates[static_cast<std::size_t>(regime)]) ++regime;
    for (int m = 0; m < kf; ++m) out.map_(t * n_regressors + fused[static_cast<std::size_t>(m)], regime * kf + m) = 1.0;
    for (int m = 0; m < ku; ++m) out.map_(t * n_regressors + varying[static_cast<std::size_t>(m)], pf + t * ku + m) = 1.0;
    for (std::size_t m = 0; m < fixed.size(); ++m) {
      out.map_(t * n_regressors + fixed[m], pf + n_periods * ku + static_cast<int>(m)) = 1.0;
    }
  }
  out.blocks_.push_back({0, p, -1});
  return out;
}

Matrix ParamLayout::to_path(const Vector& params) const {
  const Vector stacked = map_ * params;
  Matrix path(n_periods_, n_regressors_);
  for (int t = 0; t < n_periods_; ++t) path.row(t) = stacked.segment(t * n_regressors_, n_regressors_).transpose();
  return path;
}

Vector ParamLayout::from_path(const Matrix& path) const {
  Vector stacked(n_periods_ * n_regressors_);
  for (int t = 0; t < n_periods_; ++t) stacked.segment(t * n_regressors_, n_regressors_) = path.row(t).transpose();
  const Matrix gram = map_.transpose() * map_;
  return gram.ldlt().solve(map_.transpose() * stacked);
}

double QuadraticLoss::value(const Vector& v) const {
  return (v.dot(hessian * v) - 2.0 * linear.dot(v) + constant) / scale;
}

QuadraticLoss project(const Moments& moments, const ParamLayout& layout, double scale) {
  QuadraticLoss q;
  const Matrix& j = layout.map();
  q.hessian = j.transpose() * moments.gram * j;
  q.linear = j.transpose() * moments.cross;
  q.constant = moments.yy;
  q.scale = scale;
  return q;
}

bool is_singular(const Matrix& a) {
  if (a.rows() == 0) return false;
  Eigen::LDLT<Matrix> ldlt(a);
  if (ldlt.info() != Eigen::Success) return true;
  const Vector d = ldlt.vectorD();
  const double top = d.cwiseAbs().maxCoeff();
  return top <= 0.0 || d.minCoeff() <= 1e-12 * top;
}

Matrix pseudo_inverse(const Matrix& a) {
  if (a.rows() == 0) return a;
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  const Vector& ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  Vector inv = Vector::Zero(ev.size());
  for (Eigen::Index j = 0; j < ev.size(); ++j) {
    if (ev[j] > 1e-12 * top) inv[j] = 1.0 / ev[j];
  }
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

Vector solve_psd(const Matrix& a, const Vector& b, SingularPolicy policy, const std::string& context) {
  if (a.rows() == 0) return Vector::Zero(0);
  Eigen::LDLT<Matrix> ldlt(a);
  bool singular = ldlt.info() != Eigen::Success;
  if (!singular) {
    const Vector d = ldlt.vectorD();
    const double top = d.cwiseAbs().maxCoeff();
    singular = top <= 0.0 || d.minCoeff() <= 1e-12 * top;
  }
  if (!singular) return ldlt.solve(b);
  if (policy == SingularPolicy::error) {
    throw NumericalError("singular Gram matrix: " + context);
  }
  return pseudo_inverse(a) * b;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(base) ^ mix(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace gagfl

namespace gagfl {

Matrix homogeneous_offset(const Panel& panel, const ModelDesign& design, const Vector& beta_h) {
  const auto hom = design.coords(CoefKind::homogeneous, panel.n_regressors());
  Matrix off = Matrix::Zero(panel.n_units(), panel.n_periods());
  for (int i = 0; i < panel.n_units(); ++i) {
    for (int t = 0; t < panel.n_periods(); ++t) {
      for (std::size_t m = 0; m < hom.size(); ++m) off(i, t) += panel.x(i, t)(hom[m]) * beta_h[static_cast<Eigen::Index>(m)];
    }
  }
  return off;
}

void set_homogeneous(CoefficientPath& path, const ModelDesign& design, const Vector& beta_h) {
  const auto hom = design.coords(CoefKind::homogeneous, path.n_regressors());
  for (int g = 0; g < path.n_groups(); ++g) {
    for (std::size_t m = 0; m < hom.size(); ++m) path.group(g).col(hom[m]).setConstant(beta_h[static_cast<Eigen::Index>(m)]);
  }
}

Vector update_homogeneous(const Panel& panel, const GroupAssignment& assignment, const CoefficientPath& path,
                          const ModelDesign& design, SingularPolicy policy) {
  const int k = panel.n_regressors();
  const auto hom = design.coords(CoefKind::homogeneous, k);
  const int kh = static_cast<int>(hom.size());
  std::vector<bool> is_hom(static_cast<std::size_t>(k), false);
  for (int j : hom) is_hom[static_cast<std::size_t>(j)] = true;

  auto partial_fit = [&](int i, int t) {
    const Matrix& b = path.group(assignment[i]);
    double s = 0.0;
    for (int j = 0; j < k; ++j) {
      if (!is_hom[static_cast<std::size_t>(j)]) s += panel.x(i, t)(j) * b(t, j);
    }
    return panel.y(i, t) - s;
  };
  auto hom_regressors = [&](int i, int t) {
    Vector z(kh);
    for (int m = 0; m < kh; ++m) z[m] = panel.x(i, t)(hom[static_cast<std::size_t>(m)]);
    return z;
  };

  Matrix gram = Matrix::Zero(kh, kh);
  Vector cross = Vector::Zero(kh);
  for (int i = 0; i < panel.n_units(); ++i) {
    for (int t = first_observation(design.mode); t < panel.n_periods(); ++t) {
      double r = partial_fit(i, t);
      Vector z = hom_regressors(i, t);
      if (design.mode == Mode::first_difference) {
        r -= partial_fit(i, t - 1);
        z -= hom_regressors(i, t - 1);
      }
      gram.noalias() += z * z.transpose();
      cross += r * z;
    }
  }
  return solve_psd(gram, cross, policy, "homogeneous coefficients");
}

}  // namespace gagfl
