#pragma once

// Adaptive group fused Lasso for one group with a fixed membership: block
// coordinate descent in jump form, adaptive weights, and the post-Lasso refit
// with unit-clustered standard errors.

#include "gagfl/design.hpp"
#include "gagfl/model.hpp"

#include <span>
#include <vector>

namespace gagfl {

struct AgflOptions {
  double kappa = 2.0;
  double tol_theta = 1e-6;
  double tol_obj = 1e-10;
  int max_sweeps = 1000;
  double weight_floor = 1e-10;
  SingularPolicy singular_policy = SingularPolicy::error;

  void validate() const;
};

// values(g, s - 1) weighs the jump into 0-based period s.
struct AdaptiveWeights {
  Matrix values;  // G x (T-1)
};

// w = max(||d||, floor)^-kappa on adjacent differences of the coordinates in
// mask (all when empty).
AdaptiveWeights compute_weights(const CoefficientPath& prelim, double kappa, double weight_floor,
                                const std::vector<bool>& mask = {});

struct BlockUpdate {
  Vector theta;
  bool fallback = false;
  int iterations = 0;
};

// argmin 1/2 t'Ht - t'b + threshold ||t||. When the norm root search fails
// a single majorization step from `current` is returned instead.
BlockUpdate block_update(const Matrix& h, const Vector& b, double threshold, const Vector& current);

// Quadratic loss plus lambda * sum_s weight_s ||v_s|| over the penalized
// blocks (blocks[1..]); blocks[0] is unpenalized and may be empty.
struct BlockProblem {
  QuadraticLoss loss;
  std::vector<ParamLayout::Block> blocks;
  Vector weights;  // one per penalized block

  double objective(const Vector& v, double lambda) const;
  double penalty(const Vector& v) const;
};

struct BcdResult {
  Vector params;
  double objective = 0.0;
  int sweeps = 0;
  bool converged = false;
  int fallbacks = 0;
};

// trace, when given, receives the objective after every block update.
BcdResult solve_bcd(const BlockProblem& problem, double lambda, const AgflOptions& opts,
                    const Vector* init = nullptr, std::vector<double>* trace = nullptr);

// Smallest lambda at which every penalized block is zero.
double lambda_max(const BlockProblem& problem, SingularPolicy policy = SingularPolicy::error);

// Largest violation of the optimality conditions, on the scale of the
// objective's gradient.
double kkt_violation(const BlockProblem& problem, double lambda, const Vector& v);

struct GroupProblem {
  ParamLayout layout;
  BlockProblem problem;
};

// scale <= 0 means N * T of the whole panel.
GroupProblem make_group_problem(const Panel& panel, std::span<const int> members, const Vector& weights,
                                const ModelDesign& design = {}, const Matrix* offset = nullptr,
                                double scale = 0.0);

struct GroupFit {
  Matrix path;  // T x k
  double objective = 0.0;
  int sweeps = 0;
  bool converged = false;
  int fallbacks = 0;
};

GroupFit agfl_solve_group(const Panel& panel, std::span<const int> members, const Vector& weights,
                          double lambda, const AgflOptions& opts, const Matrix* init = nullptr,
                          const ModelDesign& design = {}, const Matrix* offset = nullptr);

struct PostLassoFit {
  BreakStructure breaks;               // regimes hold the refit coefficients
  std::vector<Matrix> regime_std_errors;
  CoefficientPath path;
  CoefficientPath se_path;
  Vector homogeneous;
  double ssr = 0.0;
  int n_params = 0;
};

// Joint least squares with fused coordinates constant within the given
// regimes. Only the break dates of `breaks` are read.
PostLassoFit post_lasso(const Panel& panel, const GroupAssignment& assignment, const BreakStructure& breaks,
                        const ModelDesign& design = {}, SingularPolicy policy = SingularPolicy::error);

}  // namespace gagfl
