#include "gradbasis/gradient_basis.hpp"

#include "gradbasis/training.hpp"

namespace gradbasis {

SolveInfo ConvexSolveResult::info() const {
  SolveInfo s;
  s.solver = solver == SolverKind::ClosedForm ? "closed_form" : "iterative_convex";
  s.value = optimal_value;
  s.grad_residual = grad_residual;
  s.iterations = iterations;
  s.attained = attained;
  return s;
}

double linear_model_value(const Matrix& design, const Dataset& data, const LossKind& loss,
                          const Vector& alpha) {
  const Eigen::Index d_y = data.d_y();
  if (design.rows() != data.m() * d_y || design.cols() != alpha.size())
    throw InvalidInput("linear_model_value: dimension mismatch");
  const Vector q = design * alpha;
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.m(); ++i)
    total += data.lambda[i] * loss_value(loss, q.segment(i * d_y, d_y), data.Y.row(i).transpose());
  return total;
}

namespace {

Vector linear_model_grad(const Matrix& design, const Dataset& data, const LossKind& loss,
                         const Vector& alpha) {
  const Eigen::Index d_y = data.d_y();
  const Vector q = design * alpha;
  Vector r(data.m() * d_y);
  for (Eigen::Index i = 0; i < data.m(); ++i)
    r.segment(i * d_y, d_y) =
        data.lambda[i] * loss_grad(loss, q.segment(i * d_y, d_y), data.Y.row(i).transpose());
  return design.transpose() * r;
}

}  // namespace

ConvexSolveResult solve_linear_model(const Matrix& design, const Dataset& data,
                                     const LossKind& loss, const Vector& alpha0) {
  ConvexSolveResult res;
  if (loss.variant == LossKind::Variant::Squared) {
    res.solver = SolverKind::ClosedForm;
    res.alpha = min_norm_lstsq(design, data.stacked_targets(), data.stacked_weights());
    res.optimal_value = linear_model_value(design, data, loss, res.alpha);
    res.grad_residual =
        linear_model_grad(design, data, loss, res.alpha).lpNorm<Eigen::Infinity>();
    res.iterations = 0;
    res.attained = true;
    return res;
  }

  res.solver = SolverKind::IterativeConvex;
  Vector alpha = alpha0.size() == design.cols() ? alpha0 : Vector::Zero(design.cols());
  double value = linear_model_value(design, data, loss, alpha);
  Vector g = linear_model_grad(design, data, loss, alpha);
  double step = 1.0;
  bool decreasing_at_cap = false;
  int it = 0;
  for (; it < tol::kConvexMaxIters; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= tol::kConvexGradTol) break;
    const double gsq = g.squaredNorm();
    double t = step;
    bool accepted = false;
    while (t > 1e-20) {
      const Vector trial = alpha - t * g;
      const double trial_value = linear_model_value(design, data, loss, trial);
      if (std::isfinite(trial_value) && trial_value <= value - 1e-4 * t * gsq) {
        decreasing_at_cap = trial_value < value;
        alpha = trial;
        value = trial_value;
        step = std::min(t * 2.0, 1e6);
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    g = linear_model_grad(design, data, loss, alpha);
  }
  res.alpha = alpha;
  res.optimal_value = value;
  res.grad_residual = g.lpNorm<Eigen::Infinity>();
  res.iterations = it;
  // A hit iteration cap while still descending flags a possibly unattained
  // infimum (e.g. cross-entropy on separable data).
  res.attained = res.grad_residual <= tol::kConvexGradTol ||
                 (it < tol::kConvexMaxIters && !decreasing_at_cap);
  return res;
}

GradientBasis build_gradient_basis(const ModelSpec& spec, const ParamVector& theta,
                                   const Dataset& data) {
  GradientBasis basis;
  basis.phi = param_jacobian(spec, theta, data);
  const Matrix f = batch_forward(spec, theta, data.X);
  basis.anchor = Vector(data.m() * data.d_y());
  for (Eigen::Index i = 0; i < data.m(); ++i)
    basis.anchor.segment(i * data.d_y(), data.d_y()) = f.col(i);
  basis.spec = spec;
  basis.theta = theta;
  basis.data = data;
  const Vector witness = assumption2_witness(spec, theta);
  basis.witness_residual = (basis.phi * witness - basis.anchor).norm() /
                           std::max(1.0, basis.anchor.norm());
  return basis;
}

ConvexSolveResult solve_induced(const GradientBasis& basis, const LossKind& loss) {
  // Starting from the witness makes the model's own output feasible, so even
  // an early stop never reports a value above L(theta).
  return solve_linear_model(basis.phi, basis.data, loss,
                            assumption2_witness(basis.spec, basis.theta));
}

VerificationReport verify_theorem1(const ModelSpec& spec, const ParamVector& theta,
                                   const Dataset& data, const LossKind& loss,
                                   double grad_tol) {
  const Vector grad = grad_L(spec, theta, data, loss);
  const double grad_inf = grad.lpNorm<Eigen::Infinity>();
  if (grad_inf > grad_tol)
    throw PreconditionFailed("verify_theorem1: |grad L|_inf = " + std::to_string(grad_inf) +
                             " exceeds " + std::to_string(grad_tol));

  VerificationReport rep;
  rep.theorem = "theorem1";
  rep.model_kind = spec.kind_name();
  rep.loss_kind = loss.name();
  rep.grad_inf_norm = grad_inf;
  rep.kink_distance = kink_distance(spec, theta, data.X);
  rep.loss_value = loss_L(spec, theta, data, loss);

  const GradientBasis basis = build_gradient_basis(spec, theta, data);
  const Vector witness = assumption2_witness(spec, theta);
  ConvexSolveResult res = solve_linear_model(basis.phi, basis.data, loss, witness);

  rep.inf_L_theta = res.optimal_value;
  rep.gap = rep.loss_value - res.optimal_value;
  rep.kappa = (res.alpha - witness).norm();
  rep.tol_thm = tol::theorem(rep.loss_value, grad_inf, rep.kappa);

  const double feas = tol::feasibility(rep.loss_value);
  rep.add_check("theorem1_gap_upper", rep.gap <= rep.tol_thm, rep.gap, rep.tol_thm);
  rep.add_check("theorem1_gap_nonnegative", rep.gap >= -feas, rep.gap, feas);
  rep.add_check("witness_residual", basis.witness_residual <= 1e-9, basis.witness_residual,
                1e-9);

  FamilyValue fv;
  fv.epsilon = 0.0;
  fv.family = "gradient_basis";
  fv.directions = 1;
  fv.solve = res.info();
  rep.perturbed.push_back(fv);
  return rep;
}

}  // namespace gradbasis
