#pragma once

#include "gradbasis/linalg.hpp"
#include "gradbasis/losses.hpp"
#include "gradbasis/models.hpp"
#include "gradbasis/report.hpp"

namespace gradbasis {

/// The gradient basis at theta: column k of phi stacks d f_{x_i} / d theta_k
/// over samples (sample-major rows), and anchor = f_X(theta).
struct GradientBasis {
  Matrix phi;
  Vector anchor;
  ModelSpec spec;
  ParamVector theta;
  Dataset data;
  double witness_residual = 0.0;  // |phi g - anchor| / max(1, |anchor|)

  static constexpr const char* row_order = "sample-major";
};

enum class SolverKind { ClosedForm, IterativeConvex };

struct ConvexSolveResult {
  double optimal_value = 0.0;
  Vector alpha;
  SolverKind solver = SolverKind::ClosedForm;
  double grad_residual = 0.0;
  int iterations = 0;
  bool attained = false;

  SolveInfo info() const;
};

/// Objective value of the linear model design*alpha under the dataset's
/// weighted loss.
double linear_model_value(const Matrix& design, const Dataset& data, const LossKind& loss,
                          const Vector& alpha);

/// Minimize sum_i lambda_i ell(rows_i(design alpha), y_i) over alpha.
/// Squared loss solves exactly by minimum-norm least squares; other losses run
/// deterministic gradient descent with backtracking from alpha0.
ConvexSolveResult solve_linear_model(const Matrix& design, const Dataset& data,
                                     const LossKind& loss, const Vector& alpha0);

GradientBasis build_gradient_basis(const ModelSpec& spec, const ParamVector& theta,
                                   const Dataset& data);

/// inf_alpha L_theta(alpha) over the induced gradient basis model class,
/// started from the Assumption-2 witness so the anchor value is feasible.
ConvexSolveResult solve_induced(const GradientBasis& basis, const LossKind& loss);

/// Checks L(theta) = inf L_theta at an approximately critical point. The pass
/// tolerance is 1e-6 max(1, L) plus the first-order slack kappa |grad|_inf
/// with kappa = |alpha* - g(theta)|_2.
VerificationReport verify_theorem1(const ModelSpec& spec, const ParamVector& theta,
                                   const Dataset& data, const LossKind& loss,
                                   double grad_tol = tol::kGradTol);

}  // namespace gradbasis
