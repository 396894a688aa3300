#pragma once

#include "gradbasis/losses.hpp"
#include "gradbasis/models.hpp"

#include <cstdint>

namespace gradbasis {

struct OptimizerConfig {
  int max_iters = 20000;
  double grad_tol = 1e-8;  // infinity norm
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
  std::uint64_t seed = 0;
  /// Blocks allowed to move; empty means the full parameter vector. The
  /// gradient norm reported (and tested against grad_tol) is the masked one,
  /// which operationalizes stationarity with respect to a sub-vector.
  std::vector<std::string> trainable_blocks;
};

enum class Classification { CriticalPoint, LocalMinCandidate, SaddleCandidate, NotConverged };

std::string classification_name(Classification c);

struct StationaryReport {
  ParamVector theta;
  double loss = 0.0;
  double grad_inf_norm = 0.0;
  double hessian_min_eig_estimate = std::numeric_limits<double>::quiet_NaN();
  Classification classification = Classification::NotConverged;
  double kink_distance = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

/// L(theta) = sum_i lambda_i ell(f(x_i; theta), y_i).
double loss_L(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
              const LossKind& loss);

/// Exact chain-rule gradient, assembled from loss_grad and param_jacobian.
/// Propagates NondifferentiablePoint.
Vector grad_L(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
              const LossKind& loss);

/// Indices of coordinates covered by the named blocks (all if empty).
std::vector<Eigen::Index> trainable_indices(const ParamLayout& layout,
                                            const std::vector<std::string>& blocks);

/// Gradient descent with backtracking line search until the masked gradient
/// infinity norm drops below grad_tol or max_iters is hit. Accepted steps
/// never increase the loss; the run is deterministic.
StationaryReport find_stationary(const ModelSpec& spec, const Dataset& data,
                                 const LossKind& loss, const ParamVector& theta0,
                                 const OptimizerConfig& cfg);

/// Second-order screen at an (approximately) stationary point: estimates the
/// minimum Hessian eigenvalue with central-difference Hessian-vector products
/// (h = 1e-5) and power iteration on a spectral shift, then classifies.
/// Throws PreconditionFailed when the masked gradient exceeds grad_tol.
StationaryReport classify_stationary(const ModelSpec& spec, const ParamVector& theta,
                                     const Dataset& data, const LossKind& loss,
                                     double eig_tol = tol::kEigTol,
                                     double grad_tol = tol::kGradTol,
                                     const std::vector<std::string>& trainable_blocks = {},
                                     std::uint64_t seed = 0);

/// Dense central-difference Hessian of L restricted to the trainable
/// coordinates, symmetrized. Column evaluations run in parallel; the serial
/// variant is the bit-identical reference.
Matrix finite_difference_hessian(const ModelSpec& spec, const ParamVector& theta,
                                 const Dataset& data, const LossKind& loss, double h = 1e-5,
                                 const std::vector<std::string>& trainable_blocks = {});
Matrix finite_difference_hessian_serial(const ModelSpec& spec, const ParamVector& theta,
                                        const Dataset& data, const LossKind& loss,
                                        double h = 1e-5,
                                        const std::vector<std::string>& trainable_blocks = {});

}  // namespace gradbasis
