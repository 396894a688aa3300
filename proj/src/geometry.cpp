#include "gradbasis/geometry.hpp"

#include "gradbasis/training.hpp"

namespace gradbasis {

Vector output_map(const ModelSpec& spec, const ParamVector& theta, const Dataset& data) {
  const Matrix f = batch_forward(spec, theta, data.X);
  Vector out(data.m() * data.d_y());
  for (Eigen::Index i = 0; i < data.m(); ++i)
    out.segment(i * data.d_y(), data.d_y()) = f.col(i);
  return out;
}

double dist(const Vector& f, const Dataset& data, const LossKind& loss) {
  const Eigen::Index d_y = data.d_y();
  if (f.size() != data.m() * d_y) throw InvalidInput("dist: dimension mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.m(); ++i)
    total += data.lambda[i] * loss_value(loss, f.segment(i * d_y, d_y), data.Y.row(i).transpose());
  return total;
}

TangentSpace tangent_space(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
                           double rtol) {
  const Matrix phi = param_jacobian(spec, theta, data);
  TangentSpace t;
  t.anchor = output_map(spec, theta, data);
  t.basis = column_space(phi, rtol);
  t.rank = t.basis.dimension();
  return t;
}

RankProbeReport rank_semicontinuity_probe(const ModelSpec& spec, const ParamVector& theta,
                                          const Dataset& data, double radius, int n_samples,
                                          std::uint64_t seed, double rtol) {
  RankProbeReport rep;
  rep.samples_requested = n_samples;
  const Matrix phi = param_jacobian(spec, theta, data);
  rep.base_rank = numerical_rank(phi, rtol);

  Rng rng(seed);
  rep.ranks.reserve(static_cast<size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    ParamVector probe = theta;
    probe.data += rng.in_ball(theta.layout.dim, radius);
    Eigen::Index rank = 0;
    try {
      rank = numerical_rank(param_jacobian(spec, probe, data), rtol);
    } catch (const NondifferentiablePoint&) {
      ++rep.skipped_kinks;
      continue;
    }
    ++rep.samples_checked;
    rep.ranks.push_back(rank);
    if (rank < rep.base_rank) ++rep.violations;
    if (rank != rep.base_rank) rep.constant_rank = false;
  }
  return rep;
}

ProjectionReport projection_optimality(const ModelSpec& spec, const ParamVector& theta,
                                       const Dataset& data, const LossKind& loss,
                                       const SubspaceBasis& space, double grad_tol) {
  const Vector grad = grad_L(spec, theta, data, loss);
  const double grad_inf = grad.lpNorm<Eigen::Infinity>();
  if (grad_inf > grad_tol)
    throw PreconditionFailed("projection_optimality: point is not stationary");

  const Vector anchor = output_map(spec, theta, data);
  ProjectionReport rep;
  rep.anchor_dist = dist(anchor, data, loss);

  // Start at the projection of the anchor onto the subspace; by Assumption 2
  // the anchor lies in the span, so the start value matches L(theta).
  const Vector alpha0 = space.basis.cols() > 0 ? Vector(space.basis.transpose() * anchor)
                                               : Vector::Zero(0);
  const ConvexSolveResult res = solve_linear_model(space.basis, data, loss, alpha0);
  rep.min_dist = res.optimal_value;
  rep.gap = rep.anchor_dist - rep.min_dist;

  // First-order slack measured in this coordinate system: the loss gradient
  // at the anchor projected onto the subspace basis.
  const Eigen::Index d_y = data.d_y();
  Vector r(data.m() * d_y);
  for (Eigen::Index i = 0; i < data.m(); ++i)
    r.segment(i * d_y, d_y) =
        data.lambda[i] * loss_grad(loss, anchor.segment(i * d_y, d_y), data.Y.row(i).transpose());
  const double grad_span = space.basis.cols() > 0
                               ? (space.basis.transpose() * r).norm()
                               : 0.0;
  const double kappa = (res.alpha - alpha0).norm();
  rep.tol = tol::theorem(rep.anchor_dist, grad_span, kappa);
  rep.pass = rep.gap <= rep.tol && rep.gap >= -tol::feasibility(rep.anchor_dist);
  rep.solve = res.info();
  return rep;
}

}  // namespace gradbasis
