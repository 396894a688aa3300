#pragma once

#include "gradbasis/constructions.hpp"
#include "gradbasis/gradient_basis.hpp"
#include "gradbasis/training.hpp"

namespace gradbasis {

enum class Provenance { Zero, LeftNullSpace, ResNetProof, LinearChainProof, UserSupplied, Union };

std::string provenance_name(Provenance p);

/// Finite subset of V[theta, eps]: directions S_j with |S_j|_2 <= 1 whose
/// eps-step provably (and, certified here, numerically) leaves every training
/// output unchanged.
struct PerturbationSet {
  double epsilon = 0.0;
  std::vector<Vector> directions;
  std::vector<double> invariance_residuals;
  Provenance provenance = Provenance::Zero;
  int layer = -1;  // for LeftNullSpace / LinearChainProof

  std::string family_name() const;
  int size() const { return static_cast<int>(directions.size()); }
  /// Index of an exactly-zero direction, -1 if absent.
  int zero_index() const;
};

/// Basis of the perturbable gradient basis model class: Jacobian blocks at
/// theta + eps S_j, concatenated column-wise (d_theta columns per direction).
struct PerturbedBasis {
  Matrix phi_tilde;
  ModelSpec spec;
  ParamVector theta;
  Dataset data;
  PerturbationSet pset;
};

/// max_i |f_{x_i}(theta + eps s) - f_{x_i}(theta)|_inf.
double invariance_residual(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
                           double eps, const Vector& direction);

/// Fills residuals and throws InvalidInput if any direction fails the
/// certificate (residual above tol::invariance of the anchor scale).
void certify(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
             PerturbationSet& pset);

PerturbationSet zero_set(Eigen::Index d_theta, double eps);

/// One direction per left-null-space vector of h^(l-1)(X; theta): a rank-one
/// row perturbation of the layer-l weight block that annihilates the incoming
/// activations. Empty set (not an error) when the activation matrix has full
/// row rank.
PerturbationSet nullspace_perturbations(const ModelSpec& spec, const ParamVector& theta,
                                        const Dataset& data, Eigen::Index layer, double eps,
                                        int max_dirs);

/// The residual-form family: {0} when rank(W) >= d_y, otherwise {0} plus the
/// d_y d_z rank-one R-block directions a b_j^T with a a unit null vector of W.
/// Requires d_y <= min(d_x, d_z).
PerturbationSet resnet_S_prime(const ModelSpec& spec, const ParamVector& theta,
                               const Dataset& data, double eps);

/// Chain construction for layer l in {t..H}: {0} when the downstream product
/// of selected-channel blocks keeps full rank, otherwise the paired family of
/// rank-one null-vector perturbations on the selected blocks (duplicates
/// removed). Requires a certified structure whose selected channels also
/// satisfy the zero-block conditions.
PerturbationSet linear_chain_S(const ModelSpec& spec, const ParamVector& theta,
                               const Dataset& data, double eps, Eigen::Index layer,
                               const InducedStructure& structure);

/// Union with duplicate directions removed; both sets must share eps.
PerturbationSet union_sets(const PerturbationSet& a, const PerturbationSet& b);

/// User-supplied directions (one per row); certified or rejected.
PerturbationSet user_directions(const ModelSpec& spec, const ParamVector& theta,
                                const Dataset& data, double eps, const Matrix& rows);

PerturbedBasis build_perturbed_basis(const ModelSpec& spec, const ParamVector& theta,
                                     const Dataset& data, const PerturbationSet& pset);
PerturbedBasis build_perturbed_basis_serial(const ModelSpec& spec, const ParamVector& theta,
                                            const Dataset& data, const PerturbationSet& pset);

/// inf over alpha in R^{d_theta x |S|} of the perturbed objective; the
/// feasible start embeds the witness at the zero direction when present.
ConvexSolveResult solve_perturbed(const PerturbedBasis& pbasis, const LossKind& loss);

/// Largest relative residual of projecting the target columns onto the column
/// space of `matrix` (the span-containment measure).
double span_containment_residual(const Matrix& matrix, const Matrix& targets);

/// Column space of the union equals the sum of the two column spaces;
/// max_residual receives the largest relative projection residual.
bool lemma1_check(const PerturbedBasis& a, const PerturbedBasis& b,
                  double* max_residual = nullptr);

/// Design matrix of the linear model alpha * F_i over a p x m feature matrix,
/// with coefficients vectorized column-major: (m d_y) x (p d_y).
Matrix linear_probe_design(const Matrix& features, Eigen::Index d_y);

VerificationReport verify_theorem2(const ModelSpec& spec, const StationaryReport& at,
                                   const Dataset& data, const LossKind& loss, double eps,
                                   const std::vector<PerturbationSet>& families);

VerificationReport verify_theorem3(const ModelSpec& spec, const StationaryReport& at,
                                   const Dataset& data, const LossKind& loss, double eps);

VerificationReport verify_theorem4(const ModelSpec& spec, const StationaryReport& at,
                                   const Dataset& data, const LossKind& loss, double eps,
                                   const InducedStructure& structure);

}  // namespace gradbasis
