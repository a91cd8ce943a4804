#pragma once

// Panel data container and the group / break / coefficient representations
// shared by every estimator in the library.
//
// Conventions:
//  * units and periods are 0-based in memory (row i*T + t of the regressor
//    matrix holds x_it);
//  * group labels are 0-based in memory and 1-based in every file format;
//  * break dates are 1-based periods in {2..T}: a break at date d means the
//    coefficient of period d differs from the one of period d-1.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gagfl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDefaultBreakTolerance = 1e-8;

class Panel {
 public:
  // y is N x T; x is (N*T) x k with row i*T + t holding x_it.
  Panel(Matrix y, Matrix x, std::vector<std::string> unit_ids = {},
        std::vector<std::string> period_ids = {});

  int n_units() const { return static_cast<int>(y_.rows()); }
  int n_periods() const { return static_cast<int>(y_.cols()); }
  int n_regressors() const { return static_cast<int>(x_.cols()); }

  double y(int i, int t) const { return y_(i, t); }
  auto x(int i, int t) const { return x_.row(static_cast<Eigen::Index>(i) * n_periods() + t); }

  const Matrix& y_matrix() const { return y_; }
  const Matrix& x_matrix() const { return x_; }
  const std::vector<std::string>& unit_ids() const { return unit_ids_; }
  const std::vector<std::string>& period_ids() const { return period_ids_; }

  // Same panel with y replaced by c * y.
  Panel scaled_outcome(double c) const;

 private:
  Matrix y_;
  Matrix x_;
  std::vector<std::string> unit_ids_;
  std::vector<std::string> period_ids_;
};

class GroupAssignment {
 public:
  GroupAssignment() = default;
  // labels are 0-based, each in [0, n_groups).
  GroupAssignment(std::vector<int> labels, int n_groups);

  static GroupAssignment from_one_based(std::span<const int> labels, int n_groups);
  static GroupAssignment single_group(int n_units);

  int n_groups() const { return n_groups_; }
  int n_units() const { return static_cast<int>(labels_.size()); }
  int operator[](int i) const { return labels_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& labels() const { return labels_; }

  std::vector<int> sizes() const;
  std::vector<int> members(int g) const;
  std::vector<std::vector<int>> all_members() const;
  bool has_empty_group() const;

  // Relabels so that old label g becomes perm[g].
  GroupAssignment relabeled(std::span<const int> perm) const;

  std::uint64_t hash() const;

  friend bool operator==(const GroupAssignment&, const GroupAssignment&) = default;

 private:
  std::vector<int> labels_;
  int n_groups_ = 0;
};

// beta_{g,t} for every group and period, stored per group as a T x k matrix.
class CoefficientPath {
 public:
  CoefficientPath() = default;
  CoefficientPath(int n_groups, int n_periods, int n_regressors);
  explicit CoefficientPath(std::vector<Matrix> per_group);

  int n_groups() const { return static_cast<int>(groups_.size()); }
  int n_periods() const { return groups_.empty() ? 0 : static_cast<int>(groups_.front().rows()); }
  int n_regressors() const { return groups_.empty() ? 0 : static_cast<int>(groups_.front().cols()); }

  Matrix& group(int g) { return groups_[static_cast<std::size_t>(g)]; }
  const Matrix& group(int g) const { return groups_[static_cast<std::size_t>(g)]; }

  // theta_{g,t} = beta_{g,t} - beta_{g,t-1} for t >= 1, theta_{g,0} = beta_{g,0}.
  Matrix jumps(int g) const;

  CoefficientPath relabeled(std::span<const int> perm) const;
  bool all_finite() const;

 private:
  std::vector<Matrix> groups_;
};

struct GroupBreaks {
  std::vector<int> dates;  // strictly increasing, in {2..T}
  Matrix regimes;          // (dates.size() + 1) x k

  int n_breaks() const { return static_cast<int>(dates.size()); }
  // Index of the regime containing the 1-based period.
  int regime_of(int period) const;
  // First 1-based period of regime j.
  int regime_start(int j) const { return j == 0 ? 1 : dates[static_cast<std::size_t>(j - 1)]; }
  // One past the last 1-based period of regime j.
  int regime_end(int j, int n_periods) const {
    return j == n_breaks() ? n_periods + 1 : dates[static_cast<std::size_t>(j)];
  }
  std::vector<int> regime_lengths(int n_periods) const;
};

struct BreakStructure {
  int n_periods = 0;
  std::vector<GroupBreaks> groups;

  int n_groups() const { return static_cast<int>(groups.size()); }
  // Throws ValidationError if dates fall outside {2..T}, are not strictly
  // increasing, or regime matrices have the wrong row count.
  void validate() const;
  std::vector<int> break_counts() const;
};

CoefficientPath expand_regimes(const BreakStructure& breaks, int n_periods);

// A break for g at date t iff ||beta_{g,t} - beta_{g,t-1}|| > tol, measured on
// the coordinates selected by coord_mask (all coordinates when empty).
BreakStructure infer_breaks(const CoefficientPath& path, double tol = kDefaultBreakTolerance,
                            const std::vector<bool>& coord_mask = {});

struct FitResult {
  GroupAssignment assignment;
  BreakStructure breaks;                  // regimes hold the post-Lasso alpha
  std::vector<Matrix> regime_std_errors;  // same shape as breaks.groups[g].regimes
  CoefficientPath penalized_path;
  CoefficientPath post_lasso_path;
  CoefficientPath std_error_path;
  double lambda = 0.0;
  double penalized_objective = 0.0;
  double sse = 0.0;            // post-Lasso SSR / (N T)
  double penalized_sse = 0.0;  // SSR of the penalized path / (N T)
  int n_params = 0;
  int n_outer_iterations = 0;
  bool converged = false;
  bool cycle_detected = false;
  int empty_group_repairs = 0;
  int agfl_unconverged = 0;
};

}  // namespace gagfl
