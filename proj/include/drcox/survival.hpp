#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "drcox/data.hpp"
#include "drcox/step_curve.hpp"

namespace drcox {

/// Kaplan-Meier curve for the target events, Breslow-style tie handling:
/// each distinct event time multiplies by (1 - d/r), r = #{X >= t}.
StepCurve product_limit(const Dataset& data, Target target);

/// Same estimator restricted to rows (repetition counts as weight).
StepCurve product_limit(const Dataset& data, Target target,
                        std::span<const std::size_t> rows);

/// Nelson-Aalen cumulative hazard with increments d/r.
StepCurve nelson_aalen(const Dataset& data, Target target);
StepCurve nelson_aalen(const Dataset& data, Target target,
                       std::span<const std::size_t> rows);

/// Which columns enter the Cox linear predictor.
struct CoxDesign {
  bool group = true;
  std::vector<std::size_t> covariates;  // indices into z

  static CoxDesign group_only() { return {}; }
  static CoxDesign all(std::size_t p);

  std::size_t width() const { return (group ? 1 : 0) + covariates.size(); }
};

struct NewtonPolicy {
  double tolerance = 1e-8;
  int max_iterations = 50;
};

struct CoxFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd information;  // minus the Hessian of the log partial likelihood
  StepCurve baseline;           // Breslow cumulative hazard
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  CoxDesign design;
  Target target = Target::failure;

  double linear_predictor(bool a, std::span<const double> z) const;
  /// Model-based standard errors from the inverse information.
  Eigen::VectorXd model_se() const;
};

/// Cox partial likelihood pieces (Breslow ties) at a given coefficient.
struct CoxPartial {
  double log_likelihood = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

CoxPartial cox_partial(const Dataset& data, Target target, const CoxDesign& design,
                       const Eigen::VectorXd& beta);

/// Newton-Raphson MPLE with step halving. Non-convergence (including a
/// singular information matrix, the signature of a monotone likelihood) is
/// reported through `converged`, never silently. Throws when there are no
/// events.
CoxFit cox_mple(const Dataset& data, const CoxDesign& design,
                Target target = Target::failure, const NewtonPolicy& policy = {});

/// Breslow cumulative baseline hazard at fixed coefficients.
StepCurve breslow(const Dataset& data, Target target, const CoxDesign& design,
                  const Eigen::VectorXd& beta);

/// Lin-Wei robust (score-residual) standard errors.
Eigen::VectorXd cox_robust_se(const Dataset& data, const CoxFit& fit);

/// Design row (A first when included, then selected z's).
Eigen::VectorXd design_row(const CoxDesign& design, bool a, std::span<const double> z);

}  // namespace drcox
