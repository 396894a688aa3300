#include "gradbasis/perturbation.hpp"

#include "gradbasis/parallel.hpp"

#include <algorithm>

namespace gradbasis {

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Zero: return "zero";
    case Provenance::LeftNullSpace: return "left_null_space";
    case Provenance::ResNetProof: return "resnet_proof";
    case Provenance::LinearChainProof: return "linear_chain_proof";
    case Provenance::UserSupplied: return "user_supplied";
    case Provenance::Union: return "union";
  }
  return "unknown";
}

std::string PerturbationSet::family_name() const {
  std::string n = provenance_name(provenance);
  if (layer >= 0) n += "_l" + std::to_string(layer);
  return n;
}

int PerturbationSet::zero_index() const {
  for (size_t j = 0; j < directions.size(); ++j)
    if (directions[j].isZero(0.0)) return static_cast<int>(j);
  return -1;
}

double invariance_residual(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
                           double eps, const Vector& direction) {
  const Matrix f0 = batch_forward(spec, theta, data.X);
  ParamVector moved = theta;
  moved.data += eps * direction;
  const Matrix f1 = batch_forward(spec, moved, data.X);
  return (f1 - f0).cwiseAbs().maxCoeff();
}

void certify(const ModelSpec& spec, const ParamVector& theta, const Dataset& data,
             PerturbationSet& pset) {
  const Matrix f0 = batch_forward(spec, theta, data.X);
  const double cert_tol = tol::invariance(f0.cwiseAbs().maxCoeff());
  const int n = pset.size();
  pset.invariance_residuals.assign(static_cast<size_t>(n), 0.0);
  parallel_for(n, [&](int j) {
    const Vector& s = pset.directions[static_cast<size_t>(j)];
    if (s.size() != theta.layout.dim)
      throw InvalidInput("perturbation direction has wrong dimension");
    if (s.norm() > 1.0 + 1e-12)
      throw InvalidInput("perturbation direction " + std::to_string(j) +
                         " leaves the unit ball");
    ParamVector moved = theta;
    moved.data += pset.epsilon * s;
    const Matrix f1 = batch_forward_serial(spec, moved, data.X);
    pset.invariance_residuals[static_cast<size_t>(j)] = (f1 - f0).cwiseAbs().maxCoeff();
  });
  for (int j = 0; j < n; ++j) {
    const double r = pset.invariance_residuals[static_cast<size_t>(j)];
    if (r > cert_tol)
      throw InvalidInput("direction " + std::to_string(j) + " of family " +
                         pset.family_name() + " fails the invariance certificate (residual " +
                         std::to_string(r) + " > " + std::to_string(cert_tol) + ")");
  }
}

PerturbationSet zero_set(Eigen::Index d_theta, double eps) {
  PerturbationSet p;
  p.epsilon = eps;
  p.provenance = Provenance::Zero;
  p.directions.push_back(Vector::Zero(d_theta));
  p.invariance_residuals.push_back(0.0);
  return p;
}

namespace {

std::string layer_block_name(const ModelSpec& spec, Eigen::Index layer) {
  if (spec.as_feedforward() || spec.as_skip()) return "W" + std::to_string(layer);
  if (spec.as_resnet()) return "U" + std::to_string(layer);
  throw Unsupported("model has no hidden-layer weight blocks");
}

void append_unique(PerturbationSet& pset, const Vector& dir) {
  for (const Vector& d : pset.directions)
    if (d.size() == dir.size() && d == dir) return;
  pset.directions.push_back(dir);
}

}  // namespace

PerturbationSet nullspace_perturbations(const ModelSpec& spec, const ParamVector& theta,
                                        const Dataset& data, Eigen::Index layer, double eps,
                                        int max_dirs) {
  if (eps <= 0.0) throw InvalidInput("nullspace_perturbations: epsilon must be positive");
  const std::string block_name = layer_block_name(spec, layer);
  const BlockInfo& blk = theta.layout.block(block_name);

  const std::vector<Matrix> h = hidden_activations(spec, theta, data.X);
  if (layer < 1 || layer >= static_cast<Eigen::Index>(h.size()) + 1 ||
      h[static_cast<size_t>(layer - 1)].rows() != blk.cols)
    throw InvalidInput("nullspace_perturbations: no layer " + std::to_string(layer));
  const Matrix& incoming = h[static_cast<size_t>(layer - 1)];

  PerturbationSet pset;
  pset.epsilon = eps;
  pset.provenance = Provenance::LeftNullSpace;
  pset.layer = static_cast<int>(layer);

  const SubspaceBasis null_basis = left_null_space(incoming);
  const Eigen::Index count =
      std::min<Eigen::Index>(null_basis.dimension(), max_dirs < 0 ? null_basis.dimension()
                                                                  : max_dirs);
  for (Eigen::Index j = 0; j < count; ++j) {
    const Vector w = null_basis.basis.col(j);
    Vector dir = Vector::Zero(theta.layout.dim);
    Eigen::Map<Matrix> delta(dir.data() + blk.offset, blk.rows, blk.cols);
    delta.row(j % blk.rows) = w.transpose();
    dir /= std::max(1.0, dir.norm());
    pset.directions.push_back(dir);
  }
  certify(spec, theta, data, pset);
  return pset;
}

PerturbationSet resnet_S_prime(const ModelSpec& spec, const ParamVector& theta,
                               const Dataset& data, double eps) {
  const auto* rn = spec.as_resnet();
  if (rn == nullptr) throw InvalidInput("resnet_S_prime: not a residual-form model");
  if (!(rn->d_y <= std::min(rn->d_x, rn->d_z)))
    throw PreconditionFailed("resnet_S_prime: requires d_y <= min(d_x, d_z)");

  const auto w = theta.block("W");
  if (numerical_rank(w) >= rn->d_y) return zero_set(theta.layout.dim, eps);

  // rank(W) < d_y <= d_x, so W has a right null vector a.
  const SvdResult dec = svd(w);
  const Eigen::Index rank = numerical_rank(w);
  const Vector a = dec.v.col(rank);

  PerturbationSet pset;
  pset.epsilon = eps;
  pset.provenance = Provenance::ResNetProof;
  pset.directions.push_back(Vector::Zero(theta.layout.dim));
  const BlockInfo& rblk = theta.layout.block("R");
  for (Eigen::Index j = 0; j < rn->d_y * rn->d_z; ++j) {
    Vector dir = Vector::Zero(theta.layout.dim);
    Eigen::Map<Matrix> delta(dir.data() + rblk.offset, rblk.rows, rblk.cols);
    delta.col(j % rn->d_z) = a;  // a b^T with b = e_{j mod d_z}
    dir /= std::max(1.0, dir.norm());
    pset.directions.push_back(dir);
  }
  certify(spec, theta, data, pset);
  return pset;
}

// ---------------------------------------------------------------------------
// Chain construction
// ---------------------------------------------------------------------------

namespace {

Matrix selected_block(const Matrix& w, const std::vector<Eigen::Index>& rows,
                      const std::vector<Eigen::Index>& cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w(rows[r], cols[c]);
  return out;
}

}  // namespace

PerturbationSet linear_chain_S(const ModelSpec& spec, const ParamVector& theta,
                               const Dataset& data, double eps, Eigen::Index layer,
                               const InducedStructure& s) {
  const auto* ff = spec.as_feedforward();
  if (ff == nullptr) throw InvalidInput("linear_chain_S: not a feedforward model");
  if (!s.certified)
    throw StructureNotCertified("linear_chain_S: induced structure is not certified");
  const Eigen::Index depth = ff->depth();
  const Eigen::Index d_y = ff->widths.back();
  if (s.n < d_y)
    throw StructureNotCertified("linear_chain_S: structure narrower than d_y");
  if (layer < s.t || layer > depth)
    throw InvalidInput("linear_chain_S: layer outside {t..H}");

  auto sel = [&](Eigen::Index l) {
    std::vector<Eigen::Index> full = s.layer_set(l);
    return std::vector<Eigen::Index>(full.begin(), full.begin() + d_y);
  };

  // Downstream products P(l) = A^(H+1) ... A^(l) over the selected channels.
  // P is indexed l = t+2 .. H+2 with P(H+2) = I.
  auto a_block = [&](Eigen::Index l) {
    return selected_block(theta.block("W" + std::to_string(l)), sel(l), sel(l - 1));
  };
  auto product_from = [&](Eigen::Index l) {
    Matrix p = Matrix::Identity(d_y, d_y);
    for (Eigen::Index lam = depth + 1; lam >= l; --lam) p = p * a_block(lam);
    return p;
  };

  if (layer == depth) return zero_set(theta.layout.dim, eps);
  if (numerical_rank(product_from(layer + 2)) >= d_y) return zero_set(theta.layout.dim, eps);

  Eigen::Index l_star = depth + 2;
  for (Eigen::Index l = layer + 3; l <= depth + 2; ++l) {
    const Matrix p = l <= depth + 1 ? product_from(l) : Matrix::Identity(d_y, d_y);
    if (numerical_rank(p) >= d_y) {
      l_star = l;
      break;
    }
  }

  // The invariance argument routes every perturbed signal through the
  // selected channels, so the zero blocks must hold for them exactly.
  for (Eigen::Index l = layer + 1; l <= depth - 1; ++l) {
    const auto w_next = theta.block("W" + std::to_string(l + 1));
    const auto keep = sel(l + 1);
    for (Eigen::Index i = 0; i < w_next.rows(); ++i) {
      if (std::find(keep.begin(), keep.end(), i) != keep.end()) continue;
      for (Eigen::Index j : sel(l))
        if (w_next(i, j) != 0.0)
          throw StructureNotCertified(
              "linear_chain_S: selected channels leak into unit " + std::to_string(i) +
              " of layer " + std::to_string(l + 1));
    }
  }

  // Null vectors a_l of P(l+1) for the perturbed levels.
  std::vector<Eigen::Index> levels;  // {layer+1} then layer+2 .. l_star-2
  levels.push_back(layer + 1);
  for (Eigen::Index l = layer + 2; l <= l_star - 2; ++l) levels.push_back(l);
  std::vector<Vector> null_vecs(levels.size());
  for (size_t k = 0; k < levels.size(); ++k) {
    const Matrix p = product_from(levels[k] + 1);
    const SvdResult dec = svd(p);
    const Eigen::Index rank = numerical_rank(p);
    if (rank >= d_y)
      throw StructureNotCertified("linear_chain_S: downstream product unexpectedly full rank");
    null_vecs[k] = dec.v.col(rank);
  }

  const Eigen::Index d_l = ff->widths[static_cast<size_t>(layer)];
  const size_t p_levels = levels.size();
  if ((static_cast<size_t>(d_l) << p_levels) > 4096)
    throw InvalidInput("linear_chain_S: constructed family too large");

  PerturbationSet pset;
  pset.epsilon = eps;
  pset.provenance = Provenance::LinearChainProof;
  pset.layer = static_cast<int>(layer);

  const auto r_sel = sel(layer + 1);
  const BlockInfo& r_blk = theta.layout.block("W" + std::to_string(layer + 1));
  for (Eigen::Index b_idx = 0; b_idx < d_l; ++b_idx) {
    for (size_t mask = 0; mask < (static_cast<size_t>(1) << p_levels); ++mask) {
      Vector dir = Vector::Zero(theta.layout.dim);
      for (size_t k = 0; k < p_levels; ++k) {
        if (mask & (static_cast<size_t>(1) << k)) continue;  // this level zeroed
        const Eigen::Index lam = levels[k];
        if (lam == layer + 1) {
          // R^(layer+1) rows get a b^T with b = e_{b_idx}
          Eigen::Map<Matrix> delta(dir.data() + r_blk.offset, r_blk.rows, r_blk.cols);
          for (Eigen::Index r = 0; r < d_y; ++r)
            delta(r_sel[static_cast<size_t>(r)], b_idx) += null_vecs[k][r];
        } else {
          // A^(lam) += a_lam b^T with b = a_{lam-1} (the level below)
          const BlockInfo& blk = theta.layout.block("W" + std::to_string(lam));
          Eigen::Map<Matrix> delta(dir.data() + blk.offset, blk.rows, blk.cols);
          const auto rows = sel(lam);
          const auto cols = sel(lam - 1);
          const Vector& b = null_vecs[k - 1];
          for (Eigen::Index r = 0; r < d_y; ++r)
            for (Eigen::Index c = 0; c < d_y; ++c)
              delta(rows[static_cast<size_t>(r)], cols[static_cast<size_t>(c)]) +=
                  null_vecs[k][r] * b[c];
        }
      }
      dir /= std::max(1.0, dir.norm());
      append_unique(pset, dir);
    }
  }
  certify(spec, theta, data, pset);
  return pset;
}

PerturbationSet union_sets(const PerturbationSet& a, const PerturbationSet& b) {
  if (a.epsilon != b.epsilon) throw InvalidInput("union_sets: epsilon mismatch");
  PerturbationSet u;
  u.epsilon = a.epsilon;
  u.provenance = Provenance::Union;
  for (const Vector& d : a.directions) append_unique(u, d);
  for (const Vector& d : b.directions) append_unique(u, d);
  u.invariance_residuals.assign(u.directions.size(), 0.0);
  return u;
}

PerturbationSet user_directions(const ModelSpec& spec, const ParamVector& theta,
                                const Dataset& data, double eps, const Matrix& rows) {
  if (rows.cols() != theta.layout.dim)
    throw InvalidInput("user directions: need d_theta = " + std::to_string(theta.layout.dim) +
                       " columns, got " + std::to_string(rows.cols()));
  PerturbationSet pset;
  pset.epsilon = eps;
  pset.provenance = Provenance::UserSupplied;
  for (Eigen::Index r = 0; r < rows.rows(); ++r)
    pset.directions.push_back(rows.row(r).transpose());
  certify(spec, theta, data, pset);
  return pset;
}

// ---------------------------------------------------------------------------
// Perturbed basis and solves
// ---------------------------------------------------------------------------

namespace {

template <typename Loop>
PerturbedBasis build_perturbed_basis_impl(const ModelSpec& spec, const ParamVector& theta,
                                          const Dataset& data, const PerturbationSet& pset,
                                          Loop&& loop) {
  PerturbedBasis pb;
  pb.spec = spec;
  pb.theta = theta;
  pb.data = data;
  pb.pset = pset;
  certify(spec, theta, data, pb.pset);  // re-assert membership before use

  const Eigen::Index d_theta = theta.layout.dim;
  const int count = pb.pset.size();
  pb.phi_tilde = Matrix(data.m() * data.d_y(), d_theta * count);
  loop(count, [&](int j) {
    ParamVector moved = theta;
    moved.data += pset.epsilon * pb.pset.directions[static_cast<size_t>(j)];
    try {
      pb.phi_tilde.middleCols(static_cast<Eigen::Index>(j) * d_theta, d_theta) =
          param_jacobian_serial(spec, moved, data);
    } catch (const NondifferentiablePoint& e) {
      throw NondifferentiablePoint("direction " + std::to_string(j) +
                                       " lands on a kink: " + e.what(),
                                   e.sample, e.layer, e.unit);
    }
  });
  return pb;
}

}  // namespace

PerturbedBasis build_perturbed_basis(const ModelSpec& spec, const ParamVector& theta,
                                     const Dataset& data, const PerturbationSet& pset) {
  return build_perturbed_basis_impl(spec, theta, data, pset,
                                    [](int n, auto&& body) { parallel_for(n, body); });
}

PerturbedBasis build_perturbed_basis_serial(const ModelSpec& spec, const ParamVector& theta,
                                            const Dataset& data, const PerturbationSet& pset) {
  return build_perturbed_basis_impl(spec, theta, data, pset,
                                    [](int n, auto&& body) { serial_for(n, body); });
}

ConvexSolveResult solve_perturbed(const PerturbedBasis& pbasis, const LossKind& loss) {
  // membership re-asserted before any solve
  const Matrix f0 = batch_forward(pbasis.spec, pbasis.theta, pbasis.data.X);
  const double cert_tol = tol::invariance(f0.cwiseAbs().maxCoeff());
  for (double r : pbasis.pset.invariance_residuals)
    if (r > cert_tol) throw InvalidInput("solve_perturbed: uncertified direction in family");

  const Eigen::Index d_theta = pbasis.theta.layout.dim;
  Vector alpha0 = Vector::Zero(pbasis.phi_tilde.cols());
  const int zi = pbasis.pset.zero_index();
  if (zi >= 0)
    alpha0.segment(static_cast<Eigen::Index>(zi) * d_theta, d_theta) =
        assumption2_witness(pbasis.spec, pbasis.theta);
  return solve_linear_model(pbasis.phi_tilde, pbasis.data, loss, alpha0);
}

double span_containment_residual(const Matrix& matrix, const Matrix& targets) {
  const SubspaceBasis space = column_space(matrix, tol::rank_rtol(matrix.rows(), matrix.cols()));
  double worst = 0.0;
  for (Eigen::Index c = 0; c < targets.cols(); ++c) {
    const Vector t = targets.col(c);
    worst = std::max(worst, projection_residual(space, t) / std::max(1.0, t.norm()));
  }
  return worst;
}

bool lemma1_check(const PerturbedBasis& a, const PerturbedBasis& b, double* max_residual) {
  if (a.theta.data != b.theta.data || a.pset.epsilon != b.pset.epsilon)
    throw InvalidInput("lemma1_check: bases must share theta and epsilon");

  const PerturbationSet u = union_sets(a.pset, b.pset);
  const PerturbedBasis ub = build_perturbed_basis(a.spec, a.theta, a.data, u);

  Matrix sum(a.phi_tilde.rows(), a.phi_tilde.cols() + b.phi_tilde.cols());
  sum << a.phi_tilde, b.phi_tilde;

  const SubspaceBasis sum_space = column_space(sum, tol::rank_rtol(sum.rows(), sum.cols()));
  const SubspaceBasis union_space =
      column_space(ub.phi_tilde, tol::rank_rtol(ub.phi_tilde.rows(), ub.phi_tilde.cols()));

  double worst = 0.0;
  for (Eigen::Index c = 0; c < ub.phi_tilde.cols(); ++c) {
    const Vector v = ub.phi_tilde.col(c);
    worst = std::max(worst, projection_residual(sum_space, v) / std::max(1.0, v.norm()));
  }
  for (Eigen::Index c = 0; c < sum.cols(); ++c) {
    const Vector v = sum.col(c);
    worst = std::max(worst, projection_residual(union_space, v) / std::max(1.0, v.norm()));
  }
  if (max_residual != nullptr) *max_residual = worst;
  return worst <= tol::kSubspaceResidual;
}

Matrix linear_probe_design(const Matrix& features, Eigen::Index d_y) {
  const Eigen::Index p = features.rows();
  const Eigen::Index m = features.cols();
  Matrix design = Matrix::Zero(m * d_y, p * d_y);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index c = 0; c < p; ++c)
      for (Eigen::Index r = 0; r < d_y; ++r) design(i * d_y + r, c * d_y + r) = features(c, i);
  return design;
}

// ---------------------------------------------------------------------------
// Theorem verifiers
// ---------------------------------------------------------------------------

namespace {

void require_local_min(const StationaryReport& at, const char* who) {
  if (at.classification != Classification::LocalMinCandidate)
    throw PreconditionFailed(std::string(who) + ": point is not a LocalMinCandidate (" +
                             classification_name(at.classification) + ")");
}

void fill_point_summary(VerificationReport& rep, const StationaryReport& at) {
  rep.grad_inf_norm = at.grad_inf_norm;
  rep.hessian_min_eig = at.hessian_min_eig_estimate;
  rep.kink_distance = at.kink_distance;
}

}  // namespace

VerificationReport verify_theorem2(const ModelSpec& spec, const StationaryReport& at,
                                   const Dataset& data, const LossKind& loss, double eps,
                                   const std::vector<PerturbationSet>& families) {
  require_local_min(at, "verify_theorem2");

  VerificationReport rep;
  rep.theorem = "theorem2";
  rep.model_kind = spec.kind_name();
  rep.loss_kind = loss.name();
  fill_point_summary(rep, at);
  rep.loss_value = loss_L(spec, at.theta, data, loss);

  const GradientBasis basis = build_gradient_basis(spec, at.theta, data);
  const Vector witness = assumption2_witness(spec, at.theta);
  const ConvexSolveResult induced = solve_linear_model(basis.phi, data, loss, witness);
  rep.inf_L_theta = induced.optimal_value;
  rep.gap = rep.loss_value - induced.optimal_value;
  double kappa = (induced.alpha - witness).norm();

  const double feas = tol::feasibility(rep.loss_value);
  const PerturbationSet zero = zero_set(at.theta.layout.dim, eps);

  struct Solved {
    std::string name;
    ConvexSolveResult res;
    int dirs;
    double kappa;
  };
  std::vector<Solved> solved;

  PerturbationSet accumulated = zero;
  for (const PerturbationSet& fam : families) {
    // every family is solved together with the zero direction so the witness
    // stays feasible and the chain inequality is structural
    PerturbationSet with_zero = union_sets(zero, fam);
    with_zero.epsilon = eps;
    const PerturbedBasis pb = build_perturbed_basis(spec, at.theta, data, with_zero);
    ConvexSolveResult res = solve_perturbed(pb, loss);
    Vector alpha0 = Vector::Zero(pb.phi_tilde.cols());
    alpha0.segment(static_cast<Eigen::Index>(pb.pset.zero_index()) * at.theta.layout.dim,
                   at.theta.layout.dim) = witness;
    solved.push_back({fam.family_name(), res, with_zero.size(), (res.alpha - alpha0).norm()});
    accumulated = union_sets(accumulated, fam);
  }
  {
    const PerturbedBasis pb = build_perturbed_basis(spec, at.theta, data, accumulated);
    ConvexSolveResult res = solve_perturbed(pb, loss);
    Vector alpha0 = Vector::Zero(pb.phi_tilde.cols());
    alpha0.segment(static_cast<Eigen::Index>(pb.pset.zero_index()) * at.theta.layout.dim,
                   at.theta.layout.dim) = witness;
    solved.push_back({"union", res, accumulated.size(), (res.alpha - alpha0).norm()});
  }

  for (const Solved& s : solved) kappa = std::max(kappa, s.kappa);
  rep.kappa = kappa;
  rep.tol_thm = tol::theorem(rep.loss_value, rep.grad_inf_norm, kappa);

  rep.add_check("theorem1_gap_upper", rep.gap <= rep.tol_thm, rep.gap, rep.tol_thm);
  rep.add_check("theorem1_gap_nonnegative", rep.gap >= -feas, rep.gap, feas);
  for (const Solved& s : solved) {
    FamilyValue fv;
    fv.epsilon = eps;
    fv.family = s.name;
    fv.directions = s.dirs;
    fv.solve = s.res.info();
    rep.perturbed.push_back(fv);
    const double lower_gap = rep.loss_value - s.res.optimal_value;
    rep.add_check("equality_" + s.name, lower_gap <= rep.tol_thm, lower_gap, rep.tol_thm);
    rep.add_check("chain_" + s.name,
                  s.res.optimal_value <= rep.inf_L_theta + feas,
                  s.res.optimal_value - rep.inf_L_theta, feas);
  }
  return rep;
}

namespace {

/// z(x_i; u) for all samples of a residual-form model, one column per sample.
Matrix resnet_inner_outputs(const ModelSpec& spec, const ParamVector& theta, const Matrix& X) {
  const auto* rn = spec.as_resnet();
  const std::vector<Matrix> h = hidden_activations(spec, theta, X);
  const std::string last = "U" + std::to_string(rn->inner.widths.size() - 1);
  return theta.block(last) * h.back();
}

}  // namespace

VerificationReport verify_theorem3(const ModelSpec& spec, const StationaryReport& at,
                                   const Dataset& data, const LossKind& loss, double eps) {
  const auto* rn = spec.as_resnet();
  if (rn == nullptr) throw InvalidInput("verify_theorem3: not a residual-form model");
  require_local_min(at, "verify_theorem3");
  if (!(rn->d_y <= std::min(rn->d_x, rn->d_z)))
    throw PreconditionFailed("verify_theorem3: requires d_y <= min(d_x, d_z)");

  VerificationReport rep;
  rep.theorem = "theorem3";
  rep.model_kind = spec.kind_name();
  rep.loss_kind = loss.name();
  fill_point_summary(rep, at);
  rep.loss_value = loss_L(spec, at.theta, data, loss);

  // joint linear model in [x; z(x; u)]
  const Matrix z = resnet_inner_outputs(spec, at.theta, data.X);
  Matrix features(rn->d_x + rn->d_z, data.m());
  features.topRows(rn->d_x) = data.X.transpose();
  features.bottomRows(rn->d_z) = z;
  const Matrix design = linear_probe_design(features, rn->d_y);

  // feasible start (A_w, A_r) = (W, W R) reproduces the model's own output
  const auto w = at.theta.block("W");
  const Matrix wr = w * at.theta.block("R");
  Vector alpha0 = Vector::Zero(design.cols());
  {
    Eigen::Map<Matrix> a0(alpha0.data(), rn->d_y, rn->d_x + rn->d_z);
    a0.leftCols(rn->d_x) = w;
    a0.rightCols(rn->d_z) = wr;
  }
  const ConvexSolveResult probe = solve_linear_model(design, data, loss, alpha0);
  rep.inf_L_theta = probe.optimal_value;
  rep.gap = rep.loss_value - probe.optimal_value;
  rep.kappa = (probe.alpha - alpha0).norm();
  rep.tol_thm = tol::theorem(rep.loss_value, rep.grad_inf_norm, rep.kappa);
  const double feas = tol::feasibility(rep.loss_value);

  rep.add_check("theorem3_probe_upper", rep.gap <= rep.tol_thm, rep.gap, rep.tol_thm);
  rep.add_check("theorem3_probe_nonnegative", rep.gap >= -feas, rep.gap, feas);

  // full perturbable objective with the constructive family
  const PerturbationSet sprime = resnet_S_prime(spec, at.theta, data, eps);
  const PerturbedBasis pb = build_perturbed_basis(spec, at.theta, data, sprime);
  Matrix full(design.rows(), design.cols() + pb.phi_tilde.cols());
  full << design, pb.phi_tilde;
  Vector full0 = Vector::Zero(full.cols());
  full0.head(design.cols()) = alpha0;
  const ConvexSolveResult full_res = solve_linear_model(full, data, loss, full0);

  FamilyValue fv;
  fv.epsilon = eps;
  fv.family = sprime.family_name();
  fv.directions = sprime.size();
  fv.solve = full_res.info();
  rep.perturbed.push_back(fv);
  const double lower_gap = rep.loss_value - full_res.optimal_value;
  rep.add_check("equality_resnet_full", lower_gap <= rep.tol_thm, lower_gap, rep.tol_thm);
  rep.add_check("chain_resnet_full", full_res.optimal_value <= probe.optimal_value + feas,
                full_res.optimal_value - probe.optimal_value, feas);
  return rep;
}

VerificationReport verify_theorem4(const ModelSpec& spec, const StationaryReport& at,
                                   const Dataset& data, const LossKind& loss, double eps,
                                   const InducedStructure& structure) {
  const auto* ff = spec.as_feedforward();
  if (ff == nullptr) throw InvalidInput("verify_theorem4: not a feedforward model");
  require_local_min(at, "verify_theorem4");
  if (!structure.certified)
    throw StructureNotCertified("verify_theorem4: induced structure is not certified");

  const Eigen::Index depth = ff->depth();
  const Eigen::Index d_y = ff->widths.back();
  const Eigen::Index t = structure.t;

  VerificationReport rep;
  rep.theorem = "theorem4";
  rep.model_kind = spec.kind_name();
  rep.loss_kind = loss.name();
  fill_point_summary(rep, at);
  rep.loss_value = loss_L(spec, at.theta, data, loss);

  // multi-layer probe sum_{l=t}^{H} alpha_h^(l+1) h^(l)(x_i)
  const std::vector<Matrix> h = hidden_activations(spec, at.theta, data.X);
  Eigen::Index p = 0;
  for (Eigen::Index l = t; l <= depth; ++l) p += ff->widths[static_cast<size_t>(l)];
  Matrix features(p, data.m());
  Eigen::Index off = 0;
  for (Eigen::Index l = t; l <= depth; ++l) {
    features.middleRows(off, ff->widths[static_cast<size_t>(l)]) = h[static_cast<size_t>(l)];
    off += ff->widths[static_cast<size_t>(l)];
  }
  const Matrix design = linear_probe_design(features, d_y);

  // feasible start: the top-layer coefficient block set to W^(H+1)
  Vector alpha0 = Vector::Zero(design.cols());
  {
    Eigen::Map<Matrix> a0(alpha0.data(), d_y, p);
    a0.rightCols(ff->widths[static_cast<size_t>(depth)]) =
        at.theta.block("W" + std::to_string(depth + 1));
  }
  const ConvexSolveResult probe = solve_linear_model(design, data, loss, alpha0);
  rep.inf_L_theta = probe.optimal_value;
  rep.gap = rep.loss_value - probe.optimal_value;
  rep.kappa = (probe.alpha - alpha0).norm();
  rep.tol_thm = tol::theorem(rep.loss_value, rep.grad_inf_norm, rep.kappa);
  const double feas = tol::feasibility(rep.loss_value);

  rep.add_check("theorem4_probe_upper", rep.gap <= rep.tol_thm, rep.gap, rep.tol_thm);
  rep.add_check("theorem4_probe_nonnegative", rep.gap >= -feas, rep.gap, feas);

  // per-layer chain families
  for (Eigen::Index l = t; l <= depth; ++l) {
    const PerturbationSet fam = linear_chain_S(spec, at.theta, data, eps, l, structure);
    const PerturbationSet with_zero = union_sets(zero_set(at.theta.layout.dim, eps), fam);
    const PerturbedBasis pb = build_perturbed_basis(spec, at.theta, data, with_zero);
    const ConvexSolveResult res = solve_perturbed(pb, loss);
    FamilyValue fv;
    fv.epsilon = eps;
    fv.family = fam.family_name();
    fv.directions = with_zero.size();
    fv.solve = res.info();
    rep.perturbed.push_back(fv);
    const double lower_gap = rep.loss_value - res.optimal_value;
    rep.add_check("equality_" + fam.family_name(), lower_gap <= rep.tol_thm, lower_gap,
                  rep.tol_thm);
  }
  return rep;
}

}  // namespace gradbasis
