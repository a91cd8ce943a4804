#include "gagfl/model.hpp"

#include "gagfl/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gagfl {

Panel::Panel(Matrix y, Matrix x, std::vector<std::string> unit_ids,
             std::vector<std::string> period_ids)
    : y_(std::move(y)), x_(std::move(x)), unit_ids_(std::move(unit_ids)),
      period_ids_(std::move(period_ids)) {
  const auto n = y_.rows();
  const auto t = y_.cols();
  if (n < 2 || t < 2) {
    throw ValidationError("panel needs at least 2 units and 2 periods");
  }
  if (x_.cols() < 1) {
    throw ValidationError("panel needs at least one regressor");
  }
  if (x_.rows() != n * t) {
    std::ostringstream msg;
    msg << "regressor matrix has " << x_.rows() << " rows, expected N*T = " << n * t;
    throw ValidationError(msg.str());
  }
  if (!y_.allFinite() || !x_.allFinite()) {
    throw ValidationError("panel contains non-finite values");
  }
  if (unit_ids_.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) unit_ids_.push_back(std::to_string(i + 1));
  }
  if (period_ids_.empty()) {
    for (Eigen::Index s = 0; s < t; ++s) period_ids_.push_back(std::to_string(s + 1));
  }
  if (static_cast<Eigen::Index>(unit_ids_.size()) != n ||
      static_cast<Eigen::Index>(period_ids_.size()) != t) {
    throw ValidationError("unit/period id count does not match panel dimensions");
  }
}

Panel Panel::scaled_outcome(double c) const {
  return Panel(c * y_, x_, unit_ids_, period_ids_);
}

GroupAssignment::GroupAssignment(std::vector<int> labels, int n_groups)
    : labels_(std::move(labels)), n_groups_(n_groups) {
  if (n_groups_ < 1) throw ValidationError("number of groups must be positive");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || labels_[i] >= n_groups_) {
      std::ostringstream msg;
      msg << "unit " << i << " has label " << labels_[i] + 1 << " outside 1.." << n_groups_;
      throw ValidationError(msg.str());
    }
  }
}

GroupAssignment GroupAssignment::from_one_based(std::span<const int> labels, int n_groups) {
  std::vector<int> zero(labels.size());
  std::transform(labels.begin(), labels.end(), zero.begin(), [](int v) { return v - 1; });
  return GroupAssignment(std::move(zero), n_groups);
}

GroupAssignment GroupAssignment::single_group(int n_units) {
  return GroupAssignment(std::vector<int>(static_cast<std::size_t>(n_units), 0), 1);
}

std::vector<int> GroupAssignment::sizes() const {
  std::vector<int> out(static_cast<std::size_t>(n_groups_), 0);
  for (int g : labels_) ++out[static_cast<std::size_t>(g)];
  return out;
}

std::vector<int> GroupAssignment::members(int g) const {
  std::vector<int> out;
  for (int i = 0; i < n_units(); ++i) {
    if (labels_[static_cast<std::size_t>(i)] == g) out.push_back(i);
  }
  return out;
}

std::vector<std::vector<int>> GroupAssignment::all_members() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n_groups_));
  for (int i = 0; i < n_units(); ++i) out[static_cast<std::size_t>(labels_[static_cast<std::size_t>(i)])].push_back(i);
  return out;
}

bool GroupAssignment::has_empty_group() const {
  const auto s = sizes();
  return std::find(s.begin(), s.end(), 0) != s.end();
}

GroupAssignment GroupAssignment::relabeled(std::span<const int> perm) const {
  std::vector<int> out(labels_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) out[i] = perm[static_cast<std::size_t>(labels_[i])];
  return GroupAssignment(std::move(out), n_groups_);
}

std::uint64_t GroupAssignment::hash() const {
  // FNV-1a over the label sequence.
  std::uint64_t h = 1469598103934665603ULL;
  for (int v : labels_) {
    h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL;
    h *= 1099511628211ULL;
  }
  return h;
}

CoefficientPath::CoefficientPath(int n_groups, int n_periods, int n_regressors)
    : groups_(static_cast<std::size_t>(n_groups), Matrix::Zero(n_periods, n_regressors)) {}

CoefficientPath::CoefficientPath(std::vector<Matrix> per_group) : groups_(std::move(per_group)) {
  for (const auto& m : groups_) {
    if (m.rows() != groups_.front().rows() || m.cols() != groups_.front().cols()) {
      throw ValidationError("coefficient path groups have inconsistent shapes");
    }
  }
}

Matrix CoefficientPath::jumps(int g) const {
  const Matrix& b = group(g);
  Matrix out = b;
  for (Eigen::Index t = 1; t < b.rows(); ++t) out.row(t) = b.row(t) - b.row(t - 1);
  return out;
}

CoefficientPath CoefficientPath::relabeled(std::span<const int> perm) const {
  std::vector<Matrix> out(groups_.size());
  for (std::size_t g = 0; g < groups_.size(); ++g) out[static_cast<std::size_t>(perm[g])] = groups_[g];
  return CoefficientPath(std::move(out));
}

bool CoefficientPath::all_finite() const {
  return std::all_of(groups_.begin(), groups_.end(), [](const Matrix& m) { return m.allFinite(); });
}

int GroupBreaks::regime_of(int period) const {
  const auto it = std::upper_bound(dates.begin(), dates.end(), period);
  return static_cast<int>(it - dates.begin());
}

std::vector<int> GroupBreaks::regime_lengths(int n_periods) const {
  std::vector<int> out;
  for (int j = 0; j <= n_breaks(); ++j) out.push_back(regime_end(j, n_periods) - regime_start(j));
  return out;
}

void BreakStructure::validate() const {
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& gb = groups[g];
    int prev = 1;
    for (int d : gb.dates) {
      if (d < 2 || d > n_periods) {
        std::ostringstream msg;
        msg << "group " << g + 1 << ": break date " << d << " outside 2.." << n_periods;
        throw ValidationError(msg.str());
      }
      if (d <= prev) {
        std::ostringstream msg;
        msg << "group " << g + 1 << ": break dates not strictly increasing at " << d;
        throw ValidationError(msg.str());
      }
      prev = d;
    }
    if (gb.regimes.rows() != gb.n_breaks() + 1) {
      std::ostringstream msg;
      msg << "group " << g + 1 << ": " << gb.regimes.rows() << " regime rows for " << gb.n_breaks()
          << " breaks";
      throw ValidationError(msg.str());
    }
  }
}

std::vector<int> BreakStructure::break_counts() const {
  std::vector<int> out;
  for (const auto& gb : groups) out.push_back(gb.n_breaks());
  return out;
}

CoefficientPath expand_regimes(const BreakStructure& breaks, int n_periods) {
  BreakStructure checked = breaks;
  checked.n_periods = n_periods;
  checked.validate();
  std::vector<Matrix> out;
  for (const auto& gb : breaks.groups) {
    Matrix path(n_periods, gb.regimes.cols());
    for (int j = 0; j <= gb.n_breaks(); ++j) {
      for (int t = gb.regime_start(j); t < gb.regime_end(j, n_periods); ++t) {
        path.row(t - 1) = gb.regimes.row(j);
      }
    }
    out.push_back(std::move(path));
  }
  return CoefficientPath(std::move(out));
}

BreakStructure infer_breaks(const CoefficientPath& path, double tol, const std::vector<bool>& coord_mask) {
  BreakStructure out;
  out.n_periods = path.n_periods();
  const int k = path.n_regressors();
  for (int g = 0; g < path.n_groups(); ++g) {
    const Matrix& b = path.group(g);
    GroupBreaks gb;
    std::vector<int> starts{0};
    for (int t = 1; t < b.rows(); ++t) {
      double sq = 0.0;
      for (int j = 0; j < k; ++j) {
        if (!coord_mask.empty() && !coord_mask[static_cast<std::size_t>(j)]) continue;
        const double d = b(t, j) - b(t - 1, j);
        sq += d * d;
      }
      if (std::sqrt(sq) > tol) {
        gb.dates.push_back(t + 1);
        starts.push_back(t);
      }
    }
    gb.regimes.resize(static_cast<Eigen::Index>(starts.size()), k);
    for (std::size_t j = 0; j < starts.size(); ++j) {
      gb.regimes.row(static_cast<Eigen::Index>(j)) = b.row(starts[j]);
    }
    out.groups.push_back(std::move(gb));
  }
  return out;
}

}  // namespace gagfl
