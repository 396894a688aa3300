#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gradbasis {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Error taxonomy. Verification code throws; the CLI translates to exit codes.
// ---------------------------------------------------------------------------

class InvalidInput : public std::runtime_error {
 public:
  explicit InvalidInput(const std::string& what) : std::runtime_error(what) {}
};

class Unsupported : public std::runtime_error {
 public:
  explicit Unsupported(const std::string& what) : std::runtime_error(what) {}
};

class PreconditionFailed : public std::runtime_error {
 public:
  explicit PreconditionFailed(const std::string& what) : std::runtime_error(what) {}
};

class Diverged : public std::runtime_error {
 public:
  explicit Diverged(const std::string& what) : std::runtime_error(what) {}
};

class StructureNotCertified : public std::runtime_error {
 public:
  explicit StructureNotCertified(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a model is evaluated for derivatives at (or numerically on) a
/// point where some per-sample output is nondifferentiable. Carries the first
/// offending (sample, layer, unit) triple.
class NondifferentiablePoint : public std::runtime_error {
 public:
  NondifferentiablePoint(const std::string& what, int sample, int layer, int unit)
      : std::runtime_error(what), sample(sample), layer(layer), unit(unit) {}
  int sample;
  int layer;
  int unit;
};

// ---------------------------------------------------------------------------
// Project-wide tolerances. Every verdict threshold is pinned here or at the
// call site that owns it; nothing is tuned at runtime.
// ---------------------------------------------------------------------------

namespace tol {

/// Infinity-norm gradient threshold that operationalizes "critical point".
inline constexpr double kGradTol = 1e-8;

/// Minimum-eigenvalue slack for the local-minimum screen.
inline constexpr double kEigTol = 1e-6;

/// Stopping residual for iterative convex solves in coefficient space.
inline constexpr double kConvexGradTol = 1e-10;
inline constexpr int kConvexMaxIters = 100000;

/// Preactivations with |z| at or below this are treated as sitting on a kink.
inline constexpr double kKinkHard = 1e-14;

/// Span-containment and subspace-equality residual thresholds.
inline constexpr double kSpanResidual = 1e-8;
inline constexpr double kSubspaceResidual = 1e-9;

/// Relative singular-value cutoff for numerical rank decisions.
inline double rank_rtol(Eigen::Index rows, Eigen::Index cols) {
  return 1e-10 * static_cast<double>(std::max(rows, cols));
}

/// Certificate threshold for membership of a direction in V[theta, eps].
inline double invariance(double anchor_inf_norm) {
  return 1e-10 * std::max(1.0, anchor_inf_norm);
}

/// Equality tolerance for the theorem checks: a relative floor plus the
/// first-order slack that accounts for stopping at an approximate critical
/// point instead of an exact one.
inline double theorem(double loss_value, double grad_inf_norm, double kappa) {
  return 1e-6 * std::max(1.0, loss_value) + kappa * grad_inf_norm;
}

/// Slack below zero allowed on gaps that are nonnegative in exact arithmetic.
inline double feasibility(double loss_value) {
  return 1e-12 * std::max(1.0, loss_value);
}

}  // namespace tol

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

}  // namespace gradbasis
