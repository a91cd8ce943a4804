#pragma once

// Model variants (level vs first-differenced, per-coordinate coefficient
// kinds) and the least-squares plumbing every estimator builds on:
// per-group normal-equation moments and the linear maps between compact
// parameter vectors and full T x k coefficient paths.

#include "gagfl/model.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gagfl {

enum class Mode { level, first_difference };

enum class CoefKind {
  fused,           // per-period coefficient, adjacent differences penalized
  time_varying,    // per-period coefficient, no fusion penalty
  time_invariant,  // one coefficient per group
  homogeneous,     // one coefficient shared by all groups and periods
};

enum class SingularPolicy { error, pseudoinverse };

struct ModelDesign {
  Mode mode = Mode::level;
  std::vector<CoefKind> kinds;  // empty: every coordinate fused

  CoefKind kind(int j) const {
    return kinds.empty() ? CoefKind::fused : kinds[static_cast<std::size_t>(j)];
  }
  bool plain() const;  // level mode, all coordinates fused
  bool has_homogeneous() const;
  std::vector<int> coords(CoefKind kind, int k) const;
  std::vector<bool> fused_mask(int k) const;
  void validate(int k) const;

  // penalized -> fused, homogeneous -> homogeneous, time_invariant ->
  // time_invariant, anything else -> time_varying.
  static ModelDesign from_masks(Mode mode, const std::vector<bool>& penalized,
                                const std::vector<bool>& homogeneous,
                                const std::vector<bool>& time_invariant = {});
};

// Outcome after first differencing: column s holds y_{i,s+1} - y_{i,s}, i.e.
// the observation of 0-based period s+1, which loads on x_{i,s+1}'beta_{s+1}
// and on -x_{i,s}'beta_s.
struct FirstDifferenced {
  Matrix dy;  // N x (T-1)
};

FirstDifferenced first_difference(const Panel& panel);

// 0-based period of each unit's first observation in the estimating equation.
inline int first_observation(Mode mode) { return mode == Mode::level ? 0 : 1; }

// Number of squared residuals summed per unit.
inline int observations_per_unit(Mode mode, int n_periods) {
  return n_periods - first_observation(mode);
}

// Residual of unit i at 0-based period t given a T x k group path. The
// optional offset (N x T) is subtracted from y before differencing.
double residual(const Panel& panel, int i, int t, const Matrix& path, Mode mode,
                const Matrix* offset = nullptr);

double unit_ssr(const Panel& panel, int i, const Matrix& path, Mode mode,
                const Matrix* offset = nullptr);

// Sum of squared residuals over every unit given assignment and paths.
double total_ssr(const Panel& panel, const GroupAssignment& assignment,
                 const CoefficientPath& path, Mode mode);

// Normal-equation moments of a group in the stacked beta space (index
// t*k + j): sum of squared residuals equals b'Gb - 2 b'c + yy.
struct Moments {
  Matrix gram;
  Vector cross;
  double yy = 0.0;
};

Moments group_moments(const Panel& panel, std::span<const int> members, Mode mode,
                      const Matrix* offset = nullptr);

// Linear map from a compact parameter vector to the stacked beta vector of
// one group (homogeneous coordinates map to zero).
class ParamLayout {
 public:
  // Column range [offset, offset + size); period < 0 marks the unpenalized
  // block, otherwise the 0-based period whose jump it holds.
  struct Block {
    int offset = 0;
    int size = 0;
    int period = -1;
  };

  // Fused coordinates in jump form theta_t; the first block collects every
  // unpenalized parameter (theta_0, time-varying and time-invariant ones).
  static ParamLayout jumps(int n_periods, int n_regressors, const ModelDesign& design);
  // Fused and time-varying coordinates free per period.
  static ParamLayout free_path(int n_periods, int n_regressors, const ModelDesign& design);
  // Fused coordinates constant within the regimes defined by dates.
  static ParamLayout regimes(int n_periods, int n_regressors, const ModelDesign& design,
                             std::span<const int> dates);

  int n_params() const { return static_cast<int>(map_.cols()); }
  int n_periods() const { return n_periods_; }
  int n_regressors() const { return n_regressors_; }
  const Matrix& map() const { return map_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  int unpenalized_size() const { return blocks_.front().size; }

  Matrix to_path(const Vector& params) const;
  // Least-squares preimage of a path.
  Vector from_path(const Matrix& path) const;

 private:
  ParamLayout(int n_periods, int n_regressors) : n_periods_(n_periods), n_regressors_(n_regressors) {}
  int n_periods_;
  int n_regressors_;
  Matrix map_;
  std::vector<Block> blocks_;
};

// Loss (v'Hv - 2 l'v + constant) / scale in a compact parameter vector v.
struct QuadraticLoss {
  Matrix hessian;
  Vector linear;
  double constant = 0.0;
  double scale = 1.0;

  double value(const Vector& v) const;
};

QuadraticLoss project(const Moments& moments, const ParamLayout& layout, double scale);

// Solves A x = b for symmetric positive semi-definite A. A is singular when
// its LDLT pivots fall below 1e-12 times the largest; the policy then
// decides between throwing NumericalError(context) and a pseudo-inverse.
Vector solve_psd(const Matrix& a, const Vector& b, SingularPolicy policy, const std::string& context);
bool is_singular(const Matrix& a);
Matrix pseudo_inverse(const Matrix& a);

// Coefficients of the homogeneous coordinates, shared by every group.
Matrix homogeneous_offset(const Panel& panel, const ModelDesign& design, const Vector& beta_h);
void set_homogeneous(CoefficientPath& path, const ModelDesign& design, const Vector& beta_h);
// Pooled least squares of the homogeneous coefficients given the other
// coordinates of the group paths.
Vector update_homogeneous(const Panel& panel, const GroupAssignment& assignment,
                          const CoefficientPath& path, const ModelDesign& design, SingularPolicy policy);

// SplitMix64-based derivation of independent stream seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace gagfl
