#pragma once

#include "gradbasis/gradient_basis.hpp"

namespace gradbasis {

/// Affine tangent object at f_X(theta): orthonormal basis of the Jacobian
/// column space through the anchor.
struct TangentSpace {
  Vector anchor;
  SubspaceBasis basis;
  Eigen::Index rank = 0;
};

/// Stacked outputs (f_{x_1}^T, ..., f_{x_m}^T)^T in R^{m d_y}.
Vector output_map(const ModelSpec& spec, const ParamVector& theta, const Dataset& data);

/// dist(f, y) = sum_i lambda_i ell(f_i, y_i); equals L(theta) at the output map.
double dist(const Vector& f, const Dataset& data, const LossKind& loss);

TangentSpace tangent_space(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
                           double rtol);

struct RankProbeReport {
  Eigen::Index base_rank = 0;
  int samples_requested = 0;
  int samples_checked = 0;
  int skipped_kinks = 0;
  int violations = 0;  // sampled rank below base rank
  bool constant_rank = true;
  std::vector<Eigen::Index> ranks;
};

/// Samples theta' uniformly in B(theta, radius) (seeded), skips kink-flagged
/// points and asserts rank lower semicontinuity; also reports whether the
/// rank is constant across the samples (a sampled proxy only).
RankProbeReport rank_semicontinuity_probe(const ModelSpec& spec, const ParamVector& theta,
                                          const Dataset& data, double radius, int n_samples,
                                          std::uint64_t seed, double rtol);

struct ProjectionReport {
  double anchor_dist = 0.0;  // dist(f_X(theta), y) = L(theta)
  double min_dist = 0.0;     // convex minimum over the subspace
  double gap = 0.0;
  double tol = 0.0;
  bool pass = false;
  SolveInfo solve;
};

/// Output-space form of the theorem checks: minimizes dist over the span of
/// the supplied orthonormal basis and asserts the anchor is optimal within
/// tol::theorem. Works for both the tangent space and its perturbed
/// enlargement.
ProjectionReport projection_optimality(const ModelSpec& spec, const ParamVector& theta,
                                       const Dataset& data, const LossKind& loss,
                                       const SubspaceBasis& space,
                                       double grad_tol = tol::kGradTol);

}  // namespace gradbasis
